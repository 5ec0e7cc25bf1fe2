#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "btn/geometry.hpp"

namespace btn {

/// Validity flags for B x P particle slots.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t batch, std::size_t particles, bool valid = false)
      : batch_(batch), particles_(particles), valid_(batch * particles, valid ? 1 : 0) {}

  std::size_t batch() const { return batch_; }
  std::size_t particles() const { return particles_; }
  bool valid(std::size_t b, std::size_t p) const { return valid_[b * particles_ + p] != 0; }
  void set(std::size_t b, std::size_t p, bool v) { valid_[b * particles_ + p] = v ? 1 : 0; }
  std::size_t count(std::size_t b) const;

 private:
  std::size_t batch_ = 0;
  std::size_t particles_ = 0;
  std::vector<unsigned char> valid_;
};

/// Batched features split by representation. Storage is [b][p][f][component]
/// with 1, 3 and 9 (row-major) components for scalars, vectors and tensors.
/// Newly constructed channels are all zero.
class RepChannels {
 public:
  RepChannels() = default;
  RepChannels(std::size_t batch, std::size_t particles, std::size_t n_scalar,
              std::size_t n_vector, std::size_t n_tensor);

  std::size_t batch() const { return batch_; }
  std::size_t particles() const { return particles_; }
  std::size_t n_scalar() const { return n_scalar_; }
  std::size_t n_vector() const { return n_vector_; }
  std::size_t n_tensor() const { return n_tensor_; }

  double& scalar(std::size_t b, std::size_t p, std::size_t f) {
    return scalars_[(b * particles_ + p) * n_scalar_ + f];
  }
  double scalar(std::size_t b, std::size_t p, std::size_t f) const {
    return scalars_[(b * particles_ + p) * n_scalar_ + f];
  }
  Vec3 vector(std::size_t b, std::size_t p, std::size_t f) const;
  void set_vector(std::size_t b, std::size_t p, std::size_t f, const Vec3& v);
  Mat3 tensor(std::size_t b, std::size_t p, std::size_t f) const;
  void set_tensor(std::size_t b, std::size_t p, std::size_t f, const Mat3& t);

  std::span<const double> scalars() const { return scalars_; }
  std::span<const double> vectors() const { return vectors_; }
  std::span<const double> tensors() const { return tensors_; }
  std::span<double> scalars() { return scalars_; }
  std::span<double> vectors() { return vectors_; }
  std::span<double> tensors() { return tensors_; }

  bool same_shape(const RepChannels& other) const;
  bool all_finite() const;

 private:
  std::size_t batch_ = 0;
  std::size_t particles_ = 0;
  std::size_t n_scalar_ = 0;
  std::size_t n_vector_ = 0;
  std::size_t n_tensor_ = 0;
  std::vector<double> scalars_;
  std::vector<double> vectors_;
  std::vector<double> tensors_;
};

/// Largest absolute element-wise difference. Throws on shape mismatch.
double max_abs_diff(const RepChannels& a, const RepChannels& b);

/// Scalars untouched, vectors -> R v, tensors -> R T R^T.
RepChannels rotate_channels(const Rotation& r, const RepChannels& c);

/// Sum over valid particle slots; the result has P = 1.
/// Throws std::invalid_argument if the mask shape does not match.
RepChannels masked_sum_pool(const RepChannels& c, const Mask& m);

/// Feature-axis concatenation per representation. Throws on B/P mismatch.
RepChannels concat_features(const RepChannels& a, const RepChannels& b);

/// Zero every feature of every invalid slot.
void apply_mask(RepChannels& c, const Mask& m);
bool padding_is_zero(const RepChannels& c, const Mask& m);

}  // namespace btn
