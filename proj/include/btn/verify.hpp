#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace btn {

struct CheckLine {
  std::string name;
  double residual = 0;
  double tolerance = 0;
  bool pass = false;
};

struct CheckOptions {
  std::uint64_t seed = 1;
  std::size_t rotations = 100;       // per layer equivariance check
  std::size_t events = 20;           // end-to-end invariance
  std::size_t event_rotations = 50;
  std::size_t grad_params = 24;      // finite-difference samples per op
  bool model_checks = true;
  /// Negative control: rotate inputs with R^T while rotating outputs with R.
  bool transpose_bug = false;
};

/// Equivariance residuals of every layer, batched-vs-reference agreement,
/// finite-difference gradient checks and end-to-end model invariance.
std::vector<CheckLine> run_checks(const CheckOptions& opt);

}  // namespace btn
