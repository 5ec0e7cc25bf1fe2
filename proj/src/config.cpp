#include "btn/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace btn {

namespace pt = boost::property_tree;

namespace {

template <typename T>
T convert(const std::string& section, const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw std::runtime_error("config [" + section + "] " + key + ": expected a boolean, got '" + text + "'");
  } else {
    in >> value;
    if (in.fail() || !(in >> std::ws).eof())
      throw std::runtime_error("config [" + section + "] " + key + ": cannot parse '" + text + "'");
    if constexpr (std::is_unsigned_v<T>)
      if (text.find('-') != std::string::npos)
        throw std::runtime_error("config [" + section + "] " + key + ": must not be negative");
    return value;
  }
}

class SectionReader {
 public:
  SectionReader(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  template <typename T>
  SectionReader& get(const std::string& key, T& target) {
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '\0'))) target = convert<T>(name_, key, *v);
    known_.push_back(key);
    return *this;
  }
  SectionReader& path(const std::string& key, std::filesystem::path& target) {
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '\0'))) target = *v;
    known_.push_back(key);
    return *this;
  }
  void finish() const {
    for (const auto& [key, _] : tree_)
      if (std::find(known_.begin(), known_.end(), key) == known_.end())
        throw std::runtime_error("config [" + name_ + "]: unknown key '" + key + "'");
  }

 private:
  std::string name_;
  const pt::ptree& tree_;
  std::vector<std::string> known_;
};

}  // namespace

void RunConfig::resolve() {
  if (train_path.empty()) train_path = data_dir / "train.bin";
  if (val_path.empty()) val_path = data_dir / "val.bin";
  if (test_path.empty()) test_path = data_dir / "test.bin";
  if (checkpoint.empty()) checkpoint = out_dir / "model.ckpt";
  if (seed) {
    gen.seed = *seed;
    model.seed = *seed;
    train.seed = *seed;
  }
}

std::string RunConfig::to_ini() const {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "[run]\n";
  if (seed) o << "seed = " << *seed << "\n";
  o << "out = " << out_dir.string() << "\n";
  o << "\n[data]\ndir = " << data_dir.string() << "\n";
  if (!train_path.empty()) o << "train = " << train_path.string() << "\n";
  if (!val_path.empty()) o << "val = " << val_path.string() << "\n";
  if (!test_path.empty()) o << "test = " << test_path.string() << "\n";
  o << "n_train = " << n_train << "\nn_val = " << n_val << "\nn_test = " << n_test << "\n";
  if (!checkpoint.empty()) o << "checkpoint = " << checkpoint.string() << "\n";
  if (!resume.empty()) o << "resume = " << resume.string() << "\n";
  o << "\n[gen]\n"
    << "seed = " << gen.seed << "\n"
    << "signal_fraction = " << gen.signal_fraction << "\n"
    << "mean_tracks = " << gen.mean_tracks << "\n"
    << "pt_min = " << gen.pt_min << "\n"
    << "pt_max = " << gen.pt_max << "\n"
    << "eta_max = " << gen.eta_max << "\n"
    << "charged_fraction = " << gen.charged_fraction << "\n"
    << "track_spread = " << gen.track_spread << "\n"
    << "decay_spread = " << gen.decay_spread << "\n"
    << "flight_scale = " << gen.flight_scale << "\n"
    << "flight_shape = " << gen.flight_shape << "\n"
    << "displaced_fraction = " << gen.displaced_fraction << "\n"
    << "smear = " << gen.smear << "\n"
    << "p_electron = " << gen.p_electron << "\n"
    << "p_muon = " << gen.p_muon << "\n";
  o << "\n[model]\n";
  for (const auto& [k, v] : model.to_map()) o << k << " = " << v << "\n";
  o << "\n[train]\n"
    << "seed = " << train.seed << "\n"
    << "epochs = " << train.epochs << "\n"
    << "batch_size = " << train.batch_size << "\n"
    << "lr = " << train.lr << "\n"
    << "patience = " << train.patience << "\n"
    << "clip_norm = " << train.clip_norm << "\n"
    << "augment = " << (train.augment ? "true" : "false") << "\n";
  o << "\n[ablate]\nn_seeds = " << n_seeds << "\naug_row = " << (ablate_aug_row ? "true" : "false") << "\n";
  return o.str();
}

RunConfig parse_run_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  RunConfig c;
  const pt::ptree empty;
  auto section = [&](const std::string& name) -> const pt::ptree& {
    const auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };
  for (const auto& [name, sub] : tree) {
    if (sub.empty() && !sub.data().empty())
      throw std::runtime_error("config: key '" + name + "' outside of a section");
    if (name != "run" && name != "data" && name != "gen" && name != "model" && name != "train" && name != "ablate")
      throw std::runtime_error("config: unknown section [" + name + "]");
  }

  std::uint64_t seed = 0;
  const bool has_seed = section("run").count("seed") > 0;
  SectionReader("run", section("run")).get("seed", seed).path("out", c.out_dir).finish();
  if (has_seed) c.seed = seed;

  SectionReader("data", section("data"))
      .path("dir", c.data_dir)
      .path("train", c.train_path)
      .path("val", c.val_path)
      .path("test", c.test_path)
      .get("n_train", c.n_train)
      .get("n_val", c.n_val)
      .get("n_test", c.n_test)
      .path("checkpoint", c.checkpoint)
      .path("resume", c.resume)
      .finish();

  GenConfig& g = c.gen;
  SectionReader("gen", section("gen"))
      .get("seed", g.seed)
      .get("signal_fraction", g.signal_fraction)
      .get("mean_tracks", g.mean_tracks)
      .get("pt_min", g.pt_min)
      .get("pt_max", g.pt_max)
      .get("eta_max", g.eta_max)
      .get("charged_fraction", g.charged_fraction)
      .get("track_spread", g.track_spread)
      .get("decay_spread", g.decay_spread)
      .get("flight_scale", g.flight_scale)
      .get("flight_shape", g.flight_shape)
      .get("displaced_fraction", g.displaced_fraction)
      .get("smear", g.smear)
      .get("p_electron", g.p_electron)
      .get("p_muon", g.p_muon)
      .finish();
  g.validate();

  std::map<std::string, std::string> model_kv;
  for (const auto& [k, v] : section("model")) model_kv[k] = v.data();
  try {
    c.model = ModelConfig::from_map(model_kv);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("config [model]: ") + e.what());
  }

  SectionReader("train", section("train"))
      .get("seed", c.train.seed)
      .get("epochs", c.train.epochs)
      .get("batch_size", c.train.batch_size)
      .get("lr", c.train.lr)
      .get("patience", c.train.patience)
      .get("clip_norm", c.train.clip_norm)
      .get("augment", c.train.augment)
      .finish();
  c.train.validate();

  SectionReader("ablate", section("ablate")).get("n_seeds", c.n_seeds).get("aug_row", c.ablate_aug_row).finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

}  // namespace btn
