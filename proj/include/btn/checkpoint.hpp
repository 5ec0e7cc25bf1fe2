#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "btn/autodiff.hpp"
#include "btn/models.hpp"

namespace btn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Self-describing snapshot of a model, optionally with optimizer state so
/// that training can resume.
struct Checkpoint {
  ModelConfig config;
  std::uint64_t epoch = 0;  // completed epochs
  std::vector<double> params;
  std::optional<ad::AdamState> adam;
};

/// Layout, all little-endian:
///   "BTNCKPT\0", u32 version, string config (key=value lines), u64 epoch,
///   u64 n, n x f64 params, u8 has_adam,
///   [f64 lr, beta1, beta2, eps, u64 step, n x f64 m, n x f64 v]
/// Strings are a u64 length followed by the bytes.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
/// Throws std::runtime_error on a bad magic, an unknown version, a parameter
/// count that does not match the recorded config, or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const Model& model, std::uint64_t epoch, const ad::AdamState* adam = nullptr);
/// Rebuilds the model from the recorded config and copies the parameters in.
Model restore_model(const Checkpoint& ck);

}  // namespace btn
