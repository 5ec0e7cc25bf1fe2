#include "btn/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace btn {

Rotation Rotation::from_matrix(const Mat3& m, double tol) {
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= tol)) throw std::invalid_argument("matrix is not orthogonal");
  if (!(std::abs(m.determinant() - 1.0) <= tol))
    throw std::invalid_argument("matrix is not a proper rotation (det != +1)");
  return Rotation(m);
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("degenerate axis");
  const Vec3 k = axis / n;
  const Mat3 K = skew(k);
  // R = I + sin(t) K + (1 - cos(t)) K^2
  return Rotation(Mat3::Identity() + std::sin(angle) * K + (1.0 - std::cos(angle)) * (K * K));
}

Rotation Rotation::from_quaternion(const Eigen::Quaterniond& q) {
  return Rotation(q.normalized().toRotationMatrix());
}

double Rotation::orthogonality_residual() const {
  return (m_.transpose() * m_ - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Vec3 apply_to_vector(const Rotation& r, const Vec3& v) { return r.matrix() * v; }

Mat3 apply_to_tensor(const Rotation& r, const Mat3& t) {
  return r.matrix() * t * r.matrix().transpose();
}

Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q = Eigen::Quaterniond(normal(rng), normal(rng), normal(rng), normal(rng));
  } while (q.norm() < 1e-8);
  return Rotation::from_quaternion(q);
}

double frobenius_norm(const Mat3& t) { return std::sqrt(t.cwiseAbs2().sum()); }

Mat3 skew(const Vec3& a) {
  Mat3 k;
  k << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return k;
}

Rotation axis_frame(const Vec3& unit_axis) {
  const Vec3 z = unit_axis.normalized();
  // Seed with the world axis least aligned with z.
  Eigen::Index least = 0;
  z.cwiseAbs().minCoeff(&least);
  const Vec3 seed = Vec3::Unit(least);
  const Vec3 e1 = (seed - seed.dot(z) * z).normalized();
  const Vec3 e2 = z.cross(e1);
  Mat3 f;
  f.row(0) = e1.transpose();
  f.row(1) = e2.transpose();
  f.row(2) = z.transpose();
  return Rotation(f);
}

}  // namespace btn
