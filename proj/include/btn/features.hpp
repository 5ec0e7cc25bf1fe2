#pragma once

#include <array>
#include <span>
#include <vector>

#include "btn/autodiff.hpp"
#include "btn/datagen.hpp"

namespace btn {

// Unit conventions for network inputs. A common scale per vector kind keeps
// the inputs covariant. Vector inputs are compressed (see compress()).
inline constexpr double kMomentumScale = 100.0;  // GeV
inline constexpr double kImpactScale = 0.1;      // mm

/// v log(1 + |v|/scale) / |v|: keeps the direction (so it commutes with
/// rotations) and maps magnitudes logarithmically into O(1).
Vec3 compress(const Vec3& v, double scale);
/// Signed scalar version, sign(x) log(1 + |x|/scale).
double compress(double x, double scale);

/// All nine outer products v_i v_j^T, index 3 i + j.
std::array<Mat3, 9> seed_tensors(const std::array<Vec3, 3>& v);

/// Detector-coordinate summaries of a Cartesian momentum.
double transverse_momentum(const Vec3& p);
double pseudorapidity(const Vec3& p);
double azimuth(const Vec3& p);
/// Wraps to (-pi, pi].
double delta_phi(double a, double b);
/// Signed transverse projection of the impact point: (a x p)_z / p_T.
double transverse_impact(const Track& t);
double longitudinal_impact(const Track& t);

/// The nine continuous baseline features of one track, in order:
/// jet (p_T, eta, phi), track (p_T, d_eta, d_phi), d0, z0, charge; d0 and z0
/// are compressed like the vector inputs.
std::array<double, 9> baseline_features(const JetEvent& e, const Track& t);

/// Valid tracks of a batch packed into rows; event e owns rows
/// [offsets[e], offsets[e+1]).
struct EventBatch {
  std::size_t events = 0;
  std::vector<std::size_t> offsets;
  std::vector<int> labels;
  std::vector<int> particle_type;     // per row
  ad::Block charge;                   // rows x 1 x 1
  ad::Block vectors;                  // rows x 3 x 3: jet momentum, track momentum, impact point
  ad::Block tensors;                  // rows x 9 x 9 seeded outer products (when requested)
  ad::Block baseline;                 // rows x 1 x 9 baseline features (when requested)
  std::vector<Mat3> row_frames;       // axis_frame of the owning jet, per row
  std::vector<Mat3> event_frames;

  std::size_t rows() const { return offsets.empty() ? 0 : offsets.back(); }
};

struct BatchContents {
  bool tensors = false;
  bool baseline = false;
};

/// Throws std::invalid_argument for events without tracks, with more than
/// 30 tracks, or with a zero jet momentum.
EventBatch make_batch(std::span<const JetEvent> events, BatchContents contents);

}  // namespace btn
