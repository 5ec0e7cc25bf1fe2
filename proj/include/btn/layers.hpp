#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "btn/geometry.hpp"

// Reference implementations of the equivariant layer primitives, one input
// element at a time. The batched kernels used for training (ops.hpp) are
// checked against these.

namespace btn {

/// Weights are out x in, row-major. `bias` is used by scalar layers,
/// `tensor_bias` by tensor layers (the coefficient of I). Vector layers have
/// no bias.
struct AffineParams {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
  std::vector<double> tensor_bias;

  static AffineParams zeros(std::size_t in, std::size_t out);
  static AffineParams identity(std::size_t n);
  double w(std::size_t i, std::size_t j) const { return weight[i * in + j]; }
};

std::vector<double> scalar_affine(const AffineParams& p, std::span<const double> s);
std::vector<Vec3> vector_linear(const AffineParams& p, std::span<const Vec3> v);
std::vector<Mat3> tensor_affine(const AffineParams& p, std::span<const Mat3> t);

/// One (a, b, phi) triple of an axial map.
struct So2Coeffs {
  double a = 1.0;
  double b = 1.0;
  double phi = 0.0;
};

/// A = (a jj^T + b (I - jj^T)) R_j(phi). Throws std::invalid_argument unless
/// |axis| = 1 within 1e-9.
Mat3 so2_matrix(const So2Coeffs& c, const Vec3& axis);

/// Per-connection coefficients, out x in row-major. `right` is only used by
/// the tensor layer (Y = A T B^T, with A from `left` and B from `right`).
struct So2Params {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<So2Coeffs> left;
  std::vector<So2Coeffs> right;

  static So2Params uniform(std::size_t in, std::size_t out, So2Coeffs left, So2Coeffs right = {});
};

std::vector<Vec3> so2_vector_linear(const So2Params& p, const Vec3& axis, std::span<const Vec3> v);
std::vector<Mat3> so2_tensor_linear(const So2Params& p, const Vec3& axis, std::span<const Mat3> t);

struct MixedFeatures {
  std::vector<double> scalars;
  std::vector<Vec3> vectors;
  std::vector<Mat3> tensors;
};

/// Splits each representation into halves a = [0, F), b = [F, 2F) and emits,
/// per index i, three products for every output representation:
///   scalars: s_a s_b,  v_a . v_b,   tr(T_a T_b^T)
///   vectors: s_a v_b,  v_a x v_b,   T_a v_b
///   tensors: s_a T_b,  v_a (x) v_b, T_a T_b
/// Blocks are concatenated in that order, giving 3F features each.
/// Throws std::invalid_argument for odd or mismatched feature counts.
MixedFeatures bilinear_mix(std::span<const double> s, std::span<const Vec3> v,
                           std::span<const Mat3> t);

/// Tensor-free subset for scalar/vector networks: scalars (s_a s_b, v_a . v_b)
/// and vectors (s_a v_b, v_a x v_b), giving 2F features each.
MixedFeatures bilinear_mix_vector(std::span<const double> s, std::span<const Vec3> v);

/// v if |v| < 1, else v / |v|.
Vec3 vrelu(const Vec3& v);
/// T if ||T||_F < 1, else T / ||T||_F.
Mat3 trelu(const Mat3& t);
std::vector<Vec3> vrelu(std::span<const Vec3> v);
std::vector<Mat3> trelu(std::span<const Mat3> t);
std::vector<double> scalar_relu(std::span<const double> s);

}  // namespace btn
