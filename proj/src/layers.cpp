#include "btn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace btn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_unit(const Vec3& axis) {
  require(std::abs(axis.norm() - 1.0) <= 1e-9, "axis must be a unit vector");
}

}  // namespace

AffineParams AffineParams::zeros(std::size_t in, std::size_t out) {
  AffineParams p;
  p.in = in;
  p.out = out;
  p.weight.assign(in * out, 0.0);
  p.bias.assign(out, 0.0);
  p.tensor_bias.assign(out, 0.0);
  return p;
}

AffineParams AffineParams::identity(std::size_t n) {
  AffineParams p = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) p.weight[i * n + i] = 1.0;
  return p;
}

std::vector<double> scalar_affine(const AffineParams& p, std::span<const double> s) {
  require(s.size() == p.in && p.weight.size() == p.in * p.out && p.bias.size() == p.out,
          "scalar_affine: shape mismatch");
  std::vector<double> y(p.bias.begin(), p.bias.end());
  for (std::size_t i = 0; i < p.out; ++i)
    for (std::size_t j = 0; j < p.in; ++j) y[i] += p.w(i, j) * s[j];
  return y;
}

std::vector<Vec3> vector_linear(const AffineParams& p, std::span<const Vec3> v) {
  require(v.size() == p.in && p.weight.size() == p.in * p.out, "vector_linear: shape mismatch");
  std::vector<Vec3> y(p.out, Vec3::Zero());
  for (std::size_t i = 0; i < p.out; ++i)
    for (std::size_t j = 0; j < p.in; ++j) y[i] += p.w(i, j) * v[j];
  return y;
}

std::vector<Mat3> tensor_affine(const AffineParams& p, std::span<const Mat3> t) {
  require(t.size() == p.in && p.weight.size() == p.in * p.out && p.tensor_bias.size() == p.out,
          "tensor_affine: shape mismatch");
  std::vector<Mat3> y(p.out);
  for (std::size_t i = 0; i < p.out; ++i) {
    y[i] = p.tensor_bias[i] * Mat3::Identity();
    for (std::size_t j = 0; j < p.in; ++j) y[i] += p.w(i, j) * t[j];
  }
  return y;
}

Mat3 so2_matrix(const So2Coeffs& c, const Vec3& axis) {
  require_unit(axis);
  const Mat3 along = axis * axis.transpose();
  const Mat3 across = Mat3::Identity() - along;
  const Mat3 turn = Rotation::from_axis_angle(axis, c.phi).matrix();
  return (c.a * along + c.b * across) * turn;
}

So2Params So2Params::uniform(std::size_t in, std::size_t out, So2Coeffs left, So2Coeffs right) {
  So2Params p;
  p.in = in;
  p.out = out;
  p.left.assign(in * out, left);
  p.right.assign(in * out, right);
  return p;
}

std::vector<Vec3> so2_vector_linear(const So2Params& p, const Vec3& axis, std::span<const Vec3> v) {
  require_unit(axis);
  require(v.size() == p.in && p.left.size() == p.in * p.out, "so2_vector_linear: shape mismatch");
  std::vector<Vec3> y(p.out, Vec3::Zero());
  for (std::size_t i = 0; i < p.out; ++i)
    for (std::size_t j = 0; j < p.in; ++j) y[i] += so2_matrix(p.left[i * p.in + j], axis) * v[j];
  return y;
}

std::vector<Mat3> so2_tensor_linear(const So2Params& p, const Vec3& axis, std::span<const Mat3> t) {
  require_unit(axis);
  require(t.size() == p.in && p.left.size() == p.in * p.out && p.right.size() == p.in * p.out,
          "so2_tensor_linear: shape mismatch");
  std::vector<Mat3> y(p.out, Mat3::Zero());
  for (std::size_t i = 0; i < p.out; ++i)
    for (std::size_t j = 0; j < p.in; ++j) {
      const Mat3 a = so2_matrix(p.left[i * p.in + j], axis);
      const Mat3 b = so2_matrix(p.right[i * p.in + j], axis);
      y[i] += a * t[j] * b.transpose();
    }
  return y;
}

MixedFeatures bilinear_mix(std::span<const double> s, std::span<const Vec3> v,
                           std::span<const Mat3> t) {
  require(s.size() % 2 == 0 && !s.empty(), "bilinear_mix: feature count must be even and nonzero");
  require(v.size() == s.size() && t.size() == s.size(),
          "bilinear_mix: representations must have equal feature counts");
  const std::size_t F = s.size() / 2;
  MixedFeatures out;
  out.scalars.resize(3 * F);
  out.vectors.resize(3 * F);
  out.tensors.resize(3 * F);
  for (std::size_t i = 0; i < F; ++i) {
    const double sa = s[i], sb = s[F + i];
    const Vec3& va = v[i];
    const Vec3& vb = v[F + i];
    const Mat3& ta = t[i];
    const Mat3& tb = t[F + i];
    out.scalars[i] = sa * sb;
    out.scalars[F + i] = va.dot(vb);
    out.scalars[2 * F + i] = (ta * tb.transpose()).trace();
    out.vectors[i] = sa * vb;
    out.vectors[F + i] = va.cross(vb);
    out.vectors[2 * F + i] = ta * vb;
    out.tensors[i] = sa * tb;
    out.tensors[F + i] = va * vb.transpose();
    out.tensors[2 * F + i] = ta * tb;
  }
  return out;
}

MixedFeatures bilinear_mix_vector(std::span<const double> s, std::span<const Vec3> v) {
  require(s.size() % 2 == 0 && !s.empty(), "bilinear_mix: feature count must be even and nonzero");
  require(v.size() == s.size(), "bilinear_mix: representations must have equal feature counts");
  const std::size_t F = s.size() / 2;
  MixedFeatures out;
  out.scalars.resize(2 * F);
  out.vectors.resize(2 * F);
  for (std::size_t i = 0; i < F; ++i) {
    out.scalars[i] = s[i] * s[F + i];
    out.scalars[F + i] = v[i].dot(v[F + i]);
    out.vectors[i] = s[i] * v[F + i];
    out.vectors[F + i] = v[i].cross(v[F + i]);
  }
  return out;
}

Vec3 vrelu(const Vec3& v) {
  const double n = v.norm();
  return n <= 1.0 ? v : Vec3(v / n);
}

Mat3 trelu(const Mat3& t) {
  const double n = frobenius_norm(t);
  return n <= 1.0 ? t : Mat3(t / n);
}

std::vector<Vec3> vrelu(std::span<const Vec3> v) {
  std::vector<Vec3> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(vrelu(x));
  return out;
}

std::vector<Mat3> trelu(std::span<const Mat3> t) {
  std::vector<Mat3> out;
  out.reserve(t.size());
  for (const auto& x : t) out.push_back(trelu(x));
  return out;
}

std::vector<double> scalar_relu(std::span<const double> s) {
  std::vector<double> out(s.size());
  std::transform(s.begin(), s.end(), out.begin(), [](double x) { return std::max(x, 0.0); });
  return out;
}

}  // namespace btn
