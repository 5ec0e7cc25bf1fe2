#include "btn/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace btn {

namespace {

constexpr char kMagic[8] = {'B', 'T', 'N', 'C', 'K', 'P', 'T', '\0'};

std::string encode_config(const ModelConfig& c) {
  std::string s;
  for (const auto& [k, v] : c.to_map()) s += k + "=" + v + "\n";
  return s;
}

ModelConfig decode_config(const std::string& s) {
  std::map<std::string, std::string> kv;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return ModelConfig::from_map(kv);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  io::Writer w(out);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(encode_config(ck.config));
  w.u64(ck.epoch);
  w.u64(ck.params.size());
  for (double p : ck.params) w.f64(p);
  w.u8(ck.adam ? 1 : 0);
  if (ck.adam) {
    const auto& a = *ck.adam;
    if (a.m.size() != ck.params.size() || a.v.size() != ck.params.size())
      throw std::invalid_argument("checkpoint: optimizer state does not match the parameters");
    w.f64(a.config.lr);
    w.f64(a.config.beta1);
    w.f64(a.config.beta2);
    w.f64(a.config.eps);
    w.u64(a.step);
    for (double x : a.m) w.f64(x);
    for (double x : a.v) w.f64(x);
  }
  if (!out) throw std::runtime_error("error while writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  io::Reader r(in, "checkpoint " + path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kMagic)) throw std::runtime_error("checkpoint " + path.string() + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  Checkpoint ck;
  try {
    ck.config = decode_config(r.str());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  ck.epoch = r.u64();
  const std::uint64_t n = r.u64();
  const std::size_t expected = Model(ck.config).parameter_count();
  if (n != expected)
    throw std::runtime_error("checkpoint " + path.string() + ": " + std::to_string(n) +
                             " parameters, config implies " + std::to_string(expected));
  ck.params.resize(n);
  for (double& p : ck.params) p = r.f64();
  if (r.u8()) {
    ad::AdamState a;
    a.config.lr = r.f64();
    a.config.beta1 = r.f64();
    a.config.beta2 = r.f64();
    a.config.eps = r.f64();
    a.step = r.u64();
    a.m.resize(n);
    a.v.resize(n);
    for (double& x : a.m) x = r.f64();
    for (double& x : a.v) x = r.f64();
    ck.adam = std::move(a);
  }
  return ck;
}

Checkpoint make_checkpoint(const Model& model, std::uint64_t epoch, const ad::AdamState* adam) {
  Checkpoint ck;
  ck.config = model.config();
  ck.epoch = epoch;
  const auto v = model.params().values();
  ck.params.assign(v.begin(), v.end());
  if (adam) ck.adam = *adam;
  return ck;
}

Model restore_model(const Checkpoint& ck) {
  Model m(ck.config);
  if (m.parameter_count() != ck.params.size())
    throw std::runtime_error("checkpoint: parameter count does not match the model config");
  std::copy(ck.params.begin(), ck.params.end(), m.params().values().begin());
  return m;
}

}  // namespace btn
