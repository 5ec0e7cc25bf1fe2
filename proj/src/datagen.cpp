#include "btn/datagen.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "binary_io.hpp"
#include "btn/metrics.hpp"

namespace btn {

namespace {

constexpr char kDatasetMagic[8] = {'B', 'T', 'N', 'J', 'E', 'T', 'S', '\0'};
constexpr std::uint32_t kDatasetVersion = 1;

// Direction at polar angle `theta` and azimuth `psi` about `axis`.
Vec3 direction_about(const Rotation& frame, double theta, double psi) {
  const Vec3 local(std::sin(theta) * std::cos(psi), std::sin(theta) * std::sin(psi), std::cos(theta));
  return frame.matrix().transpose() * local;
}

double rayleigh(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return scale * std::sqrt(-2.0 * std::log1p(-u(rng)));
}

}  // namespace

void GenConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("GenConfig: ") + what);
  };
  check(signal_fraction >= 0.0 && signal_fraction <= 1.0, "signal_fraction must lie in [0, 1]");
  check(mean_tracks > 0.0, "mean_tracks must be positive");
  check(pt_min > 0.0 && pt_max >= pt_min, "need 0 < pt_min <= pt_max");
  check(eta_max >= 0.0, "eta_max must be non-negative");
  check(charged_fraction > 0.0 && charged_fraction <= 1.0, "charged_fraction must lie in (0, 1]");
  check(track_spread > 0.0 && decay_spread > 0.0, "angular spreads must be positive");
  check(flight_scale >= 0.0 && smear >= 0.0, "length scales must be non-negative");
  check(flight_shape > 0.0, "flight_shape must be positive");
  check(displaced_fraction >= 0.0 && displaced_fraction <= 1.0, "displaced_fraction must lie in [0, 1]");
  check(p_electron >= 0.0 && p_muon >= 0.0 && p_electron + p_muon <= 1.0,
        "particle type probabilities must be a distribution");
}

JetEvent generate_event(const GenConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> exp1(1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;

  JetEvent ev;
  ev.label = unit(rng) < cfg.signal_fraction ? 1 : 0;

  const double pt = cfg.pt_min + (cfg.pt_max - cfg.pt_min) * unit(rng);
  const double eta = cfg.eta_max * (2.0 * unit(rng) - 1.0);
  const double phi = two_pi * unit(rng);
  ev.jet_p = Vec3(pt * std::cos(phi), pt * std::sin(phi), pt * std::sinh(eta));
  const Vec3 axis = ev.jet_p.normalized();
  const Rotation frame = axis_frame(axis);

  std::poisson_distribution<int> multiplicity(cfg.mean_tracks);
  const auto n = static_cast<std::size_t>(std::clamp(multiplicity(rng), 1, static_cast<int>(kMaxTracks)));

  std::vector<double> share(n);
  double total = 0.0;
  for (double& s : share) total += (s = exp1(rng));

  // Signal events carry a displaced vertex along the jet axis.
  Vec3 vertex = Vec3::Zero();
  if (ev.label == 1)
    vertex = cfg.flight_scale * std::pow(exp1(rng), cfg.flight_shape) / std::tgamma(cfg.flight_shape + 1.0) * axis;

  ev.tracks.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    Track& t = ev.tracks[k];
    const bool displaced = ev.label == 1 && unit(rng) < cfg.displaced_fraction;
    const double theta = rayleigh(rng, displaced ? cfg.decay_spread : cfg.track_spread);
    const Vec3 dir = direction_about(frame, std::min(theta, 0.5 * std::numbers::pi), two_pi * unit(rng));
    t.p = cfg.charged_fraction * ev.jet_p.norm() * share[k] / total * dir;

    const Vec3 origin = displaced ? vertex : Vec3::Zero();
    Vec3 a = origin - origin.dot(dir) * dir;
    const Rotation track_frame = axis_frame(dir);
    a += cfg.smear * (normal(rng) * track_frame.matrix().row(0).transpose() +
                      normal(rng) * track_frame.matrix().row(1).transpose());
    t.a = a - a.dot(dir) * dir;

    const double u = unit(rng);
    t.type = u < cfg.p_electron                  ? ParticleType::electron
             : u < cfg.p_electron + cfg.p_muon   ? ParticleType::muon
                                                 : ParticleType::hadron;
    t.charge = unit(rng) < 0.5 ? -1 : 1;
  }
  return ev;
}

std::mt19937_64 event_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::vector<JetEvent> generate_events(const GenConfig& cfg, std::size_t n, std::uint64_t stream) {
  cfg.validate();
  std::vector<JetEvent> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = event_rng(cfg.seed, stream, i);
    out.push_back(generate_event(cfg, rng));
  }
  return out;
}

JetEvent rotate_event(const JetEvent& e, const Rotation& r) {
  JetEvent out = e;
  out.jet_p = apply_to_vector(r, e.jet_p);
  for (auto& t : out.tracks) {
    t.p = apply_to_vector(r, t.p);
    t.a = apply_to_vector(r, t.a);
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const JetEvent> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  io::Writer w(out);
  w.bytes(kDatasetMagic, sizeof kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u64(events.size());
  for (const auto& e : events) {
    if (e.tracks.empty() || e.tracks.size() > kMaxTracks)
      throw std::invalid_argument("write_dataset: events need 1..30 tracks");
    w.u8(static_cast<std::uint8_t>(e.label));
    w.u8(static_cast<std::uint8_t>(e.tracks.size()));
    for (int i = 0; i < 3; ++i) w.f64(e.jet_p[i]);
    for (const auto& t : e.tracks) {
      for (int i = 0; i < 3; ++i) w.f64(t.p[i]);
      for (int i = 0; i < 3; ++i) w.f64(t.a[i]);
      w.i8(static_cast<std::int8_t>(t.charge));
      w.u8(static_cast<std::uint8_t>(t.type));
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<JetEvent> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  io::Reader r(in, "dataset " + path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kDatasetMagic)))
    throw std::runtime_error("dataset " + path.string() + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw std::runtime_error("dataset " + path.string() + ": unsupported version " + std::to_string(version));
  const std::uint64_t count = r.u64();
  std::vector<JetEvent> events;
  events.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t record_start = r.offset();
    JetEvent e;
    e.label = r.u8();
    const std::size_t n = r.u8();
    if (e.label > 1 || n == 0 || n > kMaxTracks)
      throw std::runtime_error("dataset " + path.string() + ": malformed record at byte offset " +
                               std::to_string(record_start));
    for (int i = 0; i < 3; ++i) e.jet_p[i] = r.f64();
    e.tracks.resize(n);
    for (auto& t : e.tracks) {
      for (int i = 0; i < 3; ++i) t.p[i] = r.f64();
      for (int i = 0; i < 3; ++i) t.a[i] = r.f64();
      t.charge = r.i8();
      const std::uint8_t type = r.u8();
      if (type > 2)
        throw std::runtime_error("dataset " + path.string() + ": bad particle type at byte offset " +
                                 std::to_string(r.offset() - 1));
      t.type = static_cast<ParticleType>(type);
    }
    events.push_back(std::move(e));
  }
  return events;
}

void export_text(const std::filesystem::path& path, std::span<const JetEvent> events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto vec = [](const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); };
  for (const auto& e : events) {
    nlohmann::json j;
    j["label"] = e.label;
    j["jet_p"] = vec(e.jet_p);
    j["tracks"] = nlohmann::json::array();
    for (const auto& t : e.tracks)
      j["tracks"].push_back({{"p", vec(t.p)}, {"a", vec(t.a)}, {"q", t.charge},
                             {"type", static_cast<int>(t.type)}});
    out << j.dump() << '\n';
  }
}

double azimuth_about(const Vec3& axis, const Vec3& v) {
  const Vec3 local = axis_frame(axis.normalized()).matrix() * v;
  return std::atan2(local.y(), local.x());
}

AuditResult axial_symmetry_audit(std::span<const JetEvent> events, std::size_t n_rot,
                                 std::mt19937_64& rng) {
  std::vector<double> azimuth, magnitude;
  for (const auto& e : events)
    for (const auto& t : e.tracks) {
      azimuth.push_back(azimuth_about(e.axis(), t.p));
      magnitude.push_back(t.a.norm());
    }
  std::vector<double> rot_azimuth, rot_magnitude;
  if (n_rot == 0) {
    rot_azimuth = azimuth;
    rot_magnitude = magnitude;
  }
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (std::size_t k = 0; k < n_rot; ++k)
    for (const auto& e : events) {
      const JetEvent turned = rotate_event(e, Rotation::from_axis_angle(e.axis(), angle(rng)));
      for (const auto& t : turned.tracks) {
        rot_azimuth.push_back(azimuth_about(turned.axis(), t.p));
        rot_magnitude.push_back(t.a.norm());
      }
    }
  AuditResult res;
  if (azimuth.empty()) return res;
  const KsResult az = ks_two_sample(azimuth, rot_azimuth);
  const KsResult mag = ks_two_sample(magnitude, rot_magnitude);
  res.azimuth_statistic = az.statistic;
  res.azimuth_p_value = az.p_value;
  res.magnitude_statistic = mag.statistic;
  res.magnitude_p_value = mag.p_value;
  return res;
}

}  // namespace btn
