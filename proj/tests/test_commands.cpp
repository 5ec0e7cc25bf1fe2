#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "btn/checkpoint.hpp"
#include "btn/commands.hpp"
#include "btn/config.hpp"

using namespace btn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "btn_test_commands" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

RunConfig tiny(const fs::path& root) {
  RunConfig c;
  c.seed = 5;
  c.data_dir = root / "data";
  c.out_dir = root / "out";
  c.n_train = 100;
  c.n_val = 40;
  c.n_test = 60;
  c.model.rep_width = 6;
  c.model.latent_dim = 4;
  c.model.hidden_width = 8;
  c.train.epochs = 1;
  c.train.batch_size = 32;
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_run_config(R"([run]
seed = 9
out = runs/a

[data]
dir = d
n_train = 123

[gen]
smear = 0.02

[model]
model = vector
bilinear = false
so2 = off
scalar_activation = relu
rep_width = 12

[train]
epochs = 3
lr = 0.005
clip_norm = 2.5
augment = yes

[ablate]
n_seeds = 2
)");
  CHECK(c.seed == 9u);
  CHECK(c.out_dir == "runs/a");
  CHECK(c.n_train == 123);
  CHECK(c.gen.smear == 0.02);
  CHECK(c.model.model_class == ModelClass::vector);
  CHECK_FALSE(c.model.bilinear);
  CHECK_FALSE(c.model.so2);
  CHECK(c.model.rep_width == 12);
  CHECK(c.model.scalar_activation == ScalarActivation::relu);
  CHECK(c.train.clip_norm == 2.5);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.lr == 0.005);
  CHECK(c.train.augment);
  CHECK(c.n_seeds == 2);

  auto r = c;
  r.resolve();
  CHECK(r.train_path == fs::path("d") / "train.bin");
  CHECK(r.gen.seed == 9);
  CHECK(r.train.seed == 9);
  const auto again = parse_run_config(r.to_ini());
  CHECK(again.to_ini() == r.to_ini());

  CHECK_THROWS_AS(parse_run_config("[nope]\nx = 1\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_run_config("[train]\nepoch = 3\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_run_config("[train]\nepochs = many\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_run_config("[model]\nmodel = scalar\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_run_config("[model]\nscalar_activation = tanh\n"), std::runtime_error);
  CHECK_THROWS(parse_run_config("[train]\nclip_norm = -1\n"));
  CHECK_THROWS_AS(load_run_config("/nonexistent/btn.ini"), std::runtime_error);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = fresh_dir("ckpt");
  ModelConfig mc;
  mc.rep_width = 6;
  mc.latent_dim = 4;
  mc.hidden_width = 8;
  mc.so2 = false;
  Model m(mc);
  ad::AdamState adam;
  adam.m.assign(m.parameter_count(), 0.25);
  adam.v.assign(m.parameter_count(), 0.5);
  adam.step = 17;
  const auto path = dir / "m.ckpt";
  save_checkpoint(path, make_checkpoint(m, 3, &adam));
  const auto back = load_checkpoint(path);
  CHECK(back.epoch == 3);
  CHECK(back.config.label() == mc.label());
  CHECK(back.config.rep_width == 6);
  CHECK(std::ranges::equal(back.params, m.params().values()));
  REQUIRE(back.adam);
  CHECK(back.adam->step == 17);
  CHECK(back.adam->v == adam.v);
  const Model again = restore_model(back);
  CHECK(std::ranges::equal(again.params().values(), m.params().values()));

  auto bytes = slurp(path);
  bytes[0] = 'X';
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), std::runtime_error);
  bytes = slurp(path);
  bytes[8] = 9;  // version
  std::ofstream(dir / "version.ckpt", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_checkpoint(dir / "version.ckpt"), std::runtime_error);
  bytes = slurp(path);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), std::runtime_error);
}

TEST_CASE("gen, train, eval") {
  const auto root = fresh_dir("flow");
  auto cfg = tiny(root);
  std::ostringstream log;
  const auto g = cmd_gen(cfg, log);
  CHECK(g.n_train == 100);
  CHECK(g.n_test == 60);
  const auto first = slurp(root / "data" / "train.bin");
  cmd_gen(cfg, log);
  CHECK(slurp(root / "data" / "train.bin") == first);
  CHECK(fs::exists(root / "data" / "config.ini"));
  CHECK_THROWS_AS(cmd_gen([&] { auto c = cfg; c.seed.reset(); return c; }(), log), std::invalid_argument);

  const auto res = cmd_train(cfg, log);
  CHECK(res.log.size() == 1);
  for (const char* f : {"model.ckpt", "last.ckpt", "metrics.log", "config.ini"}) CHECK(fs::exists(root / "out" / f));
  CHECK(parse_run_config(slurp(root / "out" / "config.ini")).seed == 5u);

  // resume continues the epoch count and appends to the log
  auto more = cfg;
  more.resume = root / "out" / "last.ckpt";
  more.train.epochs = 2;
  const auto res2 = cmd_train(more, log);
  REQUIRE(res2.log.size() == 2);
  CHECK(res2.log.front().epoch == 2);
  CHECK(res2.log.back().epoch == 3);
  std::istringstream metrics(slurp(root / "out" / "metrics.log"));
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(metrics, line))
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].rfind("3 ", 0) == 0);

  const auto s1 = cmd_eval(cfg, log);
  const auto s2 = cmd_eval(cfg, log);
  CHECK(s1.auc == s2.auc);
  CHECK(slurp(root / "out" / "eval.txt").find("auc") != std::string::npos);
  CHECK(fs::exists(root / "out" / "roc.txt"));

  auto mismatch = cfg;
  mismatch.model.model_class = ModelClass::vector;
  CHECK_THROWS(cmd_eval(mismatch, log, true));
  auto missing = cfg;
  missing.test_path = root / "data" / "nope.bin";
  CHECK_THROWS(cmd_eval(missing, log));
}

TEST_CASE("untrained model scores near chance") {
  const auto root = fresh_dir("chance");
  auto cfg = tiny(root);
  cfg.n_train = 10;
  cfg.n_val = 10;
  cfg.n_test = 4000;
  cfg.model = ModelConfig{};
  std::ostringstream log;
  cmd_gen(cfg, log);
  cfg.resolve();
  Model m(cfg.model);
  fs::create_directories(cfg.out_dir);
  save_checkpoint(cfg.checkpoint, make_checkpoint(m, 0));
  const auto s = cmd_eval(cfg, log);
  CHECK(std::abs(s.auc - 0.5) < 0.05);
}

TEST_CASE("training is deterministic and NaN aborts") {
  const auto root = fresh_dir("det");
  auto cfg = tiny(root);
  cfg.train.epochs = 2;
  std::ostringstream log;
  cmd_gen(cfg, log);
  cmd_train(cfg, log);
  const auto a = slurp(root / "out" / "metrics.log");
  cmd_train(cfg, log);
  CHECK(slurp(root / "out" / "metrics.log") == a);

  cfg.resolve();
  Model m(cfg.model);
  for (double& w : m.params().values()) w = std::numeric_limits<double>::quiet_NaN();
  const auto events = read_dataset(cfg.train_path);
  try {
    train_model(m, events, events, cfg.train);
    FAIL("NaN loss was not reported");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}

TEST_CASE("check report and negative control") {
  CheckOptions opt;
  opt.rotations = 10;
  opt.events = 3;
  opt.event_rotations = 3;
  opt.grad_params = 6;
  std::ostringstream good;
  CHECK_MESSAGE(cmd_check(opt, good), good.str());
  CHECK(good.str().find("gradient bilinear") != std::string::npos);
  opt.transpose_bug = true;
  opt.model_checks = false;
  std::ostringstream bad;
  CHECK_FALSE(cmd_check(opt, bad));
  CHECK(bad.str().find("FAIL") != std::string::npos);
}

TEST_CASE("ablation table") {
  const auto root = fresh_dir("ablate");
  auto cfg = tiny(root);
  cfg.n_seeds = 1;
  std::ostringstream log;
  cmd_gen(cfg, log);
  const auto rows = cmd_ablate(cfg, log);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].label == "baseline");
  CHECK(rows[6].label == "tensor+BiL+SO2");
  for (const auto& r : rows) {
    CHECK(r.auc.size() == 1);
    CHECK(r.r70_gain == doctest::Approx(r.r70_stats.median / rows[0].r70_stats.median - 1));
  }
  CHECK(rows[0].r70_gain == 0.0);
  const auto table = slurp(root / "out" / "ablation.txt");
  CHECK(table.find("IQR") != std::string::npos);
  for (const auto& r : rows) CHECK(table.find(r.label) != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(root / "out" / "ablation.json"));
  CHECK(j.dump().find("tensor+BiL+SO2") != std::string::npos);

  CHECK(ablation_ladder(cfg.model, true).size() == 8);
}

TEST_CASE("ablation gain uses medians") {
  std::vector<AblationRow> rows(2);
  rows[0].label = "baseline";
  rows[1].label = "x";
  rows[0].r70 = {100, 200, 300};
  rows[1].r70 = {150, 300, 450};
  for (auto& r : rows) r.auc = r.r85 = r.r70;
  summarize_ablation(rows);
  CHECK(rows[1].r70_stats.median == 300);
  CHECK(rows[1].r70_stats.iqr == 150);
  CHECK(rows[1].r70_gain == doctest::Approx(0.5));
  CHECK(rows[0].r85_gain == 0.0);
  CHECK(format_ablation(rows).find("+50.0%") != std::string::npos);
}
