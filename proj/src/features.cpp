#include "btn/features.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace btn {

std::array<Mat3, 9> seed_tensors(const std::array<Vec3, 3>& v) {
  std::array<Mat3, 9> out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[3 * i + j] = v[i] * v[j].transpose();
  return out;
}

Vec3 compress(const Vec3& v, double scale) {
  const double n = v.norm() / scale;
  if (n == 0.0) return Vec3::Zero();
  return v * (std::log1p(n) / (n * scale));
}

double compress(double x, double scale) { return std::copysign(std::log1p(std::abs(x) / scale), x); }

double transverse_momentum(const Vec3& p) { return std::hypot(p.x(), p.y()); }

double pseudorapidity(const Vec3& p) {
  const double pt = transverse_momentum(p);
  if (pt == 0.0) return p.z() >= 0.0 ? 1e3 : -1e3;
  return std::asinh(p.z() / pt);
}

double azimuth(const Vec3& p) { return std::atan2(p.y(), p.x()); }

double delta_phi(double a, double b) {
  double d = std::remainder(a - b, 2.0 * std::numbers::pi);
  if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

double transverse_impact(const Track& t) {
  const double pt = transverse_momentum(t.p);
  if (pt == 0.0) return std::hypot(t.a.x(), t.a.y());
  return (t.a.x() * t.p.y() - t.a.y() * t.p.x()) / pt;
}

double longitudinal_impact(const Track& t) { return t.a.z(); }

std::array<double, 9> baseline_features(const JetEvent& e, const Track& t) {
  const double jet_eta = pseudorapidity(e.jet_p), jet_phi = azimuth(e.jet_p);
  return {transverse_momentum(e.jet_p) / kMomentumScale,
          jet_eta,
          jet_phi,
          transverse_momentum(t.p) / kMomentumScale,
          pseudorapidity(t.p) - jet_eta,
          delta_phi(azimuth(t.p), jet_phi),
          compress(transverse_impact(t), kImpactScale),
          compress(longitudinal_impact(t), kImpactScale),
          static_cast<double>(t.charge)};
}

EventBatch make_batch(std::span<const JetEvent> events, BatchContents contents) {
  EventBatch b;
  b.events = events.size();
  b.offsets.assign(1, 0);
  for (const auto& e : events) {
    if (e.tracks.empty() || e.tracks.size() > kMaxTracks)
      throw std::invalid_argument("make_batch: events need 1..30 tracks");
    if (!(e.jet_p.norm() > 0.0)) throw std::invalid_argument("make_batch: zero jet momentum");
    b.offsets.push_back(b.offsets.back() + e.tracks.size());
    b.labels.push_back(e.label);
  }
  const std::size_t R = b.rows();
  b.charge = ad::Block(R, 1, 1);
  b.vectors = ad::Block(R, 3, 3);
  if (contents.tensors) b.tensors = ad::Block(R, 9, 9);
  if (contents.baseline) b.baseline = ad::Block(R, 1, 9);
  b.particle_type.resize(R);
  b.row_frames.resize(R);
  for (std::size_t ei = 0; ei < events.size(); ++ei) {
    const JetEvent& e = events[ei];
    const Mat3 frame = axis_frame(e.axis()).matrix();
    b.event_frames.push_back(frame);
    const Vec3 jet = compress(e.jet_p, kMomentumScale);
    for (std::size_t k = 0; k < e.tracks.size(); ++k) {
      const std::size_t r = b.offsets[ei] + k;
      const Track& t = e.tracks[k];
      b.row_frames[r] = frame;
      b.particle_type[r] = static_cast<int>(t.type);
      b.charge.at(r, 0, 0) = t.charge;
      const std::array<Vec3, 3> v = {jet, compress(t.p, kMomentumScale), compress(t.a, kImpactScale)};
      for (int f = 0; f < 3; ++f)
        for (int c = 0; c < 3; ++c) b.vectors.at(r, c, f) = v[f][c];
      if (contents.tensors) {
        const auto seeds = seed_tensors(v);
        for (int f = 0; f < 9; ++f)
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) b.tensors.at(r, 3 * i + j, f) = seeds[f](i, j);
      }
      if (contents.baseline) {
        const auto feats = baseline_features(e, t);
        for (int f = 0; f < 9; ++f) b.baseline.at(r, 0, f) = feats[f];
      }
    }
  }
  return b;
}

}  // namespace btn
