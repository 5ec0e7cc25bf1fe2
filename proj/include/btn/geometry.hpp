#pragma once

#include <random>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace btn {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Proper rotation of R^3. Construction always goes through a factory that
/// checks orthogonality and det = +1, so every instance is a valid SO(3) element.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Throws std::invalid_argument if `m` is not orthogonal with det +1 within `tol`.
  static Rotation from_matrix(const Mat3& m, double tol = 1e-12);
  /// Rodrigues construction. Throws std::invalid_argument("degenerate axis") for |axis| = 0.
  static Rotation from_axis_angle(const Vec3& axis, double angle);
  static Rotation from_quaternion(const Eigen::Quaterniond& q);

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }

  /// max |m^T m - I|
  double orthogonality_residual() const;

 private:
  friend Rotation axis_frame(const Vec3& unit_axis);
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

Vec3 apply_to_vector(const Rotation& r, const Vec3& v);
/// R T R^T
Mat3 apply_to_tensor(const Rotation& r, const Mat3& t);

/// Haar-uniform sample via a normalized 4D Gaussian quaternion.
Rotation random_rotation(std::mt19937_64& rng);

double frobenius_norm(const Mat3& t);

/// Cross-product matrix: skew(a) * b == a.cross(b).
Mat3 skew(const Vec3& a);

/// A rotation taking `unit_axis` to +z. Deterministic in the axis, so two
/// callers with the same axis get the same frame.
Rotation axis_frame(const Vec3& unit_axis);

}  // namespace btn
