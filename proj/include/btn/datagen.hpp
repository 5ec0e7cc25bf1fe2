#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "btn/geometry.hpp"

namespace btn {

inline constexpr std::size_t kMaxTracks = 30;

enum class ParticleType : std::uint8_t { electron = 0, muon = 1, hadron = 2 };

/// p in GeV; a in mm is the point of closest approach to the origin, so a . p = 0.
struct Track {
  Vec3 p = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  int charge = 0;
  ParticleType type = ParticleType::hadron;
};

struct JetEvent {
  Vec3 jet_p = Vec3::Zero();
  std::vector<Track> tracks;
  int label = 0;  // 1 = signal (displaced decay), 0 = background

  Vec3 axis() const { return jet_p.normalized(); }
};

/// Toy generator settings. The defaults are illustrative and make no claim
/// of physical accuracy.
struct GenConfig {
  double signal_fraction = 0.5;
  double mean_tracks = 12.0;
  double pt_min = 90.0;   // GeV
  double pt_max = 500.0;  // GeV
  double eta_max = 2.5;
  double charged_fraction = 0.65;  // share of jet momentum carried by tracks
  double track_spread = 0.1;       // rad, Rayleigh scale of prompt track angles about the axis
  double decay_spread = 0.1;       // rad, same for tracks from the displaced vertex
  double flight_scale = 10.0;      // mm, mean flight length of the displaced vertex
  double flight_shape = 3.0;       // flight = scale X^k / k!, X ~ Exp(1); k > 1 gives a heavier tail
  double displaced_fraction = 0.6; // chance that a signal track comes from the displaced vertex
  double smear = 0.03;             // mm, per-axis impact resolution transverse to the track
  double p_electron = 0.08;
  double p_muon = 0.07;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on non-physical settings.
  void validate() const;
};

/// One event from `rng`. The construction is axially symmetric about the jet
/// axis: every azimuth about it is drawn uniformly.
JetEvent generate_event(const GenConfig& cfg, std::mt19937_64& rng);

/// Independent RNG stream for event `index` of split `stream`.
std::mt19937_64 event_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// `n` events with per-event substreams, so the result does not depend on
/// how the work is partitioned.
std::vector<JetEvent> generate_events(const GenConfig& cfg, std::size_t n, std::uint64_t stream);

/// Rotates the jet momentum and every track vector.
JetEvent rotate_event(const JetEvent& e, const Rotation& r);

/// Binary format: "BTNJETS\0", u32 version, u64 record count, then per record
/// u8 label, u8 n_tracks, 3 x f64 jet momentum and n_tracks blocks of
/// (3 x f64 p, 3 x f64 a, i8 charge, u8 type). Little-endian throughout.
void write_dataset(const std::filesystem::path& path, std::span<const JetEvent> events);
/// Throws std::runtime_error on a bad header, version, or truncation (with byte offset).
std::vector<JetEvent> read_dataset(const std::filesystem::path& path);
/// One JSON object per line, for inspection.
void export_text(const std::filesystem::path& path, std::span<const JetEvent> events);

/// Azimuth of `v` about `axis`, measured in axis_frame(axis).
double azimuth_about(const Vec3& axis, const Vec3& v);

struct AuditResult {
  double azimuth_statistic = 0.0;   // two-sample KS distance
  double azimuth_p_value = 1.0;
  double magnitude_statistic = 0.0; // same for |a|
  double magnitude_p_value = 1.0;
};

/// Compares track azimuths (and |a|) against `n_rot` copies of the sample,
/// each event rotated about its own axis by a uniform random angle.
/// n_rot = 0 compares the sample with itself.
AuditResult axial_symmetry_audit(std::span<const JetEvent> events, std::size_t n_rot,
                                 std::mt19937_64& rng);

}  // namespace btn
