#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "btn/config.hpp"
#include "btn/metrics.hpp"
#include "btn/training.hpp"
#include "btn/verify.hpp"

namespace btn {

struct GenSummary {
  std::size_t n_train = 0, n_val = 0, n_test = 0;
};

/// Writes the three splits (RNG streams 0, 1, 2) and <data_dir>/config.ini.
/// Throws std::invalid_argument without a seed.
GenSummary cmd_gen(RunConfig cfg, std::ostream& log);

/// Trains on the train split, validating on the val split. Writes
/// <out>/model.ckpt (lowest validation loss), <out>/last.ckpt (with optimizer
/// state, for resume), <out>/metrics.log and <out>/config.ini.
TrainResult cmd_train(RunConfig cfg, std::ostream& log);

/// Evaluates cfg.checkpoint on the test split; writes <out>/eval.txt and
/// <out>/roc.txt. When `check_model` is set the checkpoint must carry the
/// architecture in cfg.model.
RocSummary cmd_eval(RunConfig cfg, std::ostream& log, bool check_model = false);

/// Prints one line per check; returns true when all pass.
bool cmd_check(const CheckOptions& opt, std::ostream& log);

struct AblationRow {
  std::string label;
  ModelConfig model;
  bool augment = false;
  std::vector<double> auc, r70, r85;
  MedianIqr auc_stats, r70_stats, r85_stats;
  double r70_gain = 0, r85_gain = 0;  // R / R_baseline - 1 on medians
};

/// The model ladder: baseline, vector, vector+BiL, vector+BiL+SO2, tensor,
/// tensor+BiL, tensor+BiL+SO2 (and the augmented baseline when requested),
/// with widths taken from `base`.
std::vector<AblationRow> ablation_ladder(const ModelConfig& base, bool aug_row);

/// Trains cfg.n_seeds runs per ladder row and writes <out>/ablation.txt and
/// <out>/ablation.json.
std::vector<AblationRow> cmd_ablate(RunConfig cfg, std::ostream& log);
/// Median/IQR per row and the gains R / R_first - 1; the first row is the
/// reference.
void summarize_ablation(std::vector<AblationRow>& rows);
std::string format_ablation(const std::vector<AblationRow>& rows);

}  // namespace btn
