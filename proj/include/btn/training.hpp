#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "btn/checkpoint.hpp"
#include "btn/metrics.hpp"
#include "btn/models.hpp"

namespace btn {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::size_t patience = 10;  // epochs without a lower validation loss
  bool augment = false;       // random rotation about the beam axis per batch
  double clip_norm = 0;       // rescale the gradient to at most this L2 norm; 0 disables
  std::uint64_t seed = 1;     // shuffling and augmentation

  void validate() const;
};

struct EpochRecord {
  std::uint64_t epoch = 0;  // 1-based, continues across resumes
  double train_loss = 0;
  double val_loss = 0;
  double val_auc = 0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::uint64_t best_epoch = 0;
  double best_val_loss = 0;
  bool stopped_early = false;
  Checkpoint last;  // state after the final epoch, with optimizer moments
};

/// Logit margin z_signal - z_background per event, the classifier score.
std::vector<ScoredSample> score_events(Model& model, std::span<const JetEvent> events, std::size_t batch_size = 256);
/// Mean cross-entropy of the model on `events`.
double evaluate_loss(Model& model, std::span<const JetEvent> events, std::size_t batch_size = 256);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam on `train`, validated on `val` after each epoch. On return
/// the model holds the parameters of the epoch with the lowest validation
/// loss. `resume` continues from a checkpoint's parameters, optimizer state
/// and epoch count. Throws std::runtime_error on a non-finite loss.
TrainResult train_model(Model& model, std::span<const JetEvent> train, std::span<const JetEvent> val,
                        const TrainConfig& cfg, const std::optional<Checkpoint>& resume = std::nullopt,
                        const EpochCallback& on_epoch = {});

}  // namespace btn
