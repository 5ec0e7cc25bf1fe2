#include "btn/channels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace btn {

std::size_t Mask::count(std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < particles_; ++p) n += valid(b, p) ? 1 : 0;
  return n;
}

RepChannels::RepChannels(std::size_t batch, std::size_t particles, std::size_t n_scalar,
                         std::size_t n_vector, std::size_t n_tensor)
    : batch_(batch),
      particles_(particles),
      n_scalar_(n_scalar),
      n_vector_(n_vector),
      n_tensor_(n_tensor),
      scalars_(batch * particles * n_scalar, 0.0),
      vectors_(batch * particles * n_vector * 3, 0.0),
      tensors_(batch * particles * n_tensor * 9, 0.0) {}

Vec3 RepChannels::vector(std::size_t b, std::size_t p, std::size_t f) const {
  const double* v = &vectors_[((b * particles_ + p) * n_vector_ + f) * 3];
  return {v[0], v[1], v[2]};
}

void RepChannels::set_vector(std::size_t b, std::size_t p, std::size_t f, const Vec3& v) {
  double* dst = &vectors_[((b * particles_ + p) * n_vector_ + f) * 3];
  dst[0] = v.x();
  dst[1] = v.y();
  dst[2] = v.z();
}

Mat3 RepChannels::tensor(std::size_t b, std::size_t p, std::size_t f) const {
  const double* t = &tensors_[((b * particles_ + p) * n_tensor_ + f) * 9];
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = t[3 * i + j];
  return m;
}

void RepChannels::set_tensor(std::size_t b, std::size_t p, std::size_t f, const Mat3& t) {
  double* dst = &tensors_[((b * particles_ + p) * n_tensor_ + f) * 9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) dst[3 * i + j] = t(i, j);
}

bool RepChannels::same_shape(const RepChannels& o) const {
  return batch_ == o.batch_ && particles_ == o.particles_ && n_scalar_ == o.n_scalar_ &&
         n_vector_ == o.n_vector_ && n_tensor_ == o.n_tensor_;
}

bool RepChannels::all_finite() const {
  auto finite = [](double x) { return std::isfinite(x); };
  return std::all_of(scalars_.begin(), scalars_.end(), finite) &&
         std::all_of(vectors_.begin(), vectors_.end(), finite) &&
         std::all_of(tensors_.begin(), tensors_.end(), finite);
}

double max_abs_diff(const RepChannels& a, const RepChannels& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double worst = 0.0;
  auto scan = [&](std::span<const double> x, std::span<const double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  };
  scan(a.scalars(), b.scalars());
  scan(a.vectors(), b.vectors());
  scan(a.tensors(), b.tensors());
  return worst;
}

RepChannels rotate_channels(const Rotation& r, const RepChannels& c) {
  RepChannels out = c;
  for (std::size_t b = 0; b < c.batch(); ++b)
    for (std::size_t p = 0; p < c.particles(); ++p) {
      for (std::size_t f = 0; f < c.n_vector(); ++f)
        out.set_vector(b, p, f, apply_to_vector(r, c.vector(b, p, f)));
      for (std::size_t f = 0; f < c.n_tensor(); ++f)
        out.set_tensor(b, p, f, apply_to_tensor(r, c.tensor(b, p, f)));
    }
  return out;
}

RepChannels masked_sum_pool(const RepChannels& c, const Mask& m) {
  if (m.batch() != c.batch() || m.particles() != c.particles())
    throw std::invalid_argument("masked_sum_pool: mask shape mismatch");
  RepChannels out(c.batch(), 1, c.n_scalar(), c.n_vector(), c.n_tensor());
  auto pool = [&](std::span<const double> src, std::span<double> dst, std::size_t width) {
    for (std::size_t b = 0; b < c.batch(); ++b)
      for (std::size_t p = 0; p < c.particles(); ++p) {
        if (!m.valid(b, p)) continue;
        const double* row = &src[(b * c.particles() + p) * width];
        double* acc = &dst[b * width];
        for (std::size_t k = 0; k < width; ++k) acc[k] += row[k];
      }
  };
  pool(c.scalars(), out.scalars(), c.n_scalar());
  pool(c.vectors(), out.vectors(), c.n_vector() * 3);
  pool(c.tensors(), out.tensors(), c.n_tensor() * 9);
  return out;
}

RepChannels concat_features(const RepChannels& a, const RepChannels& b) {
  if (a.batch() != b.batch() || a.particles() != b.particles())
    throw std::invalid_argument("concat_features: batch/particle mismatch");
  RepChannels out(a.batch(), a.particles(), a.n_scalar() + b.n_scalar(),
                  a.n_vector() + b.n_vector(), a.n_tensor() + b.n_tensor());
  const std::size_t rows = a.batch() * a.particles();
  auto join = [rows](std::span<const double> x, std::size_t wx, std::span<const double> y,
                     std::size_t wy, std::span<double> dst) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.begin() + r * wx, wx, dst.begin() + r * (wx + wy));
      std::copy_n(y.begin() + r * wy, wy, dst.begin() + r * (wx + wy) + wx);
    }
  };
  join(a.scalars(), a.n_scalar(), b.scalars(), b.n_scalar(), out.scalars());
  join(a.vectors(), a.n_vector() * 3, b.vectors(), b.n_vector() * 3, out.vectors());
  join(a.tensors(), a.n_tensor() * 9, b.tensors(), b.n_tensor() * 9, out.tensors());
  return out;
}

void apply_mask(RepChannels& c, const Mask& m) {
  if (m.batch() != c.batch() || m.particles() != c.particles())
    throw std::invalid_argument("apply_mask: mask shape mismatch");
  auto zero = [&](std::span<double> data, std::size_t width) {
    for (std::size_t b = 0; b < c.batch(); ++b)
      for (std::size_t p = 0; p < c.particles(); ++p)
        if (!m.valid(b, p))
          std::fill_n(data.begin() + (b * c.particles() + p) * width, width, 0.0);
  };
  zero(c.scalars(), c.n_scalar());
  zero(c.vectors(), c.n_vector() * 3);
  zero(c.tensors(), c.n_tensor() * 9);
}

bool padding_is_zero(const RepChannels& c, const Mask& m) {
  RepChannels masked = c;
  apply_mask(masked, m);
  return max_abs_diff(masked, c) == 0.0;
}

}  // namespace btn
