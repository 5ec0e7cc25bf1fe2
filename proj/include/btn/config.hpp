#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "btn/datagen.hpp"
#include "btn/models.hpp"
#include "btn/training.hpp"

namespace btn {

/// Everything a subcommand needs. Loaded from an INI-style file
/// (key = value lines under [run], [data], [gen], [model], [train] and
/// [ablate] sections) and then overridden by command-line flags.
struct RunConfig {
  std::optional<std::uint64_t> seed;  // copied into gen, model and train seeds by resolve()
  std::filesystem::path out_dir = "out";

  std::filesystem::path data_dir = "data";
  std::filesystem::path train_path;  // default <data_dir>/train.bin
  std::filesystem::path val_path;
  std::filesystem::path test_path;
  std::size_t n_train = 50000;
  std::size_t n_val = 10000;
  std::size_t n_test = 10000;

  std::filesystem::path checkpoint;  // eval input; default <out_dir>/model.ckpt
  std::filesystem::path resume;      // train: continue from this checkpoint

  GenConfig gen;
  ModelConfig model;
  TrainConfig train;

  std::size_t n_seeds = 5;
  bool ablate_aug_row = false;  // add the rotation-augmented baseline to the ladder

  /// Fills default paths and propagates the seed.
  void resolve();
  /// Resolved configuration in the file format accepted by load_run_config.
  std::string to_ini() const;
};

/// Throws std::runtime_error for unreadable files, unknown sections or keys,
/// and malformed values.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

}  // namespace btn
