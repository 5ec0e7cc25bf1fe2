#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace btn {

struct ScoredSample {
  double score = 0.0;  // larger means more signal-like
  int label = 0;       // 1 signal, 0 background
};

/// Returned by rejection_at_efficiency when no background passes the cut;
/// the finite lower bound is then the background count.
inline constexpr double kInfiniteRejection = std::numeric_limits<double>::infinity();

/// Probability that a random signal outscores a random background, ties
/// counted one half. Throws std::invalid_argument unless both classes are present.
double roc_auc(std::span<const ScoredSample> samples);

/// Background rejection 1/FPR at the largest score cut (pass: score >= cut)
/// whose signal efficiency is at least `eff`. Requires 0 < eff < 1 and both
/// classes.
double rejection_at_efficiency(std::span<const ScoredSample> samples, double eff);

struct RocPoint {
  double efficiency = 0.0;
  double rejection = 0.0;
};

/// One point per distinct score cut, in order of increasing efficiency.
std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples);

struct RocSummary {
  double auc = 0.5;
  double r70 = 1.0;
  double r85 = 1.0;
  std::size_t n_signal = 0;
  std::size_t n_background = 0;
  std::vector<RocPoint> curve;
};

RocSummary summarize_roc(std::span<const ScoredSample> samples);

/// Two columns "efficiency rejection", one row per curve point.
void write_roc_curve(const std::filesystem::path& path, std::span<const RocPoint> curve);

struct MedianIqr {
  double median = 0.0;
  double iqr = 0.0;
};

/// Linear-interpolation quantile (type 7) on unsorted input.
double quantile(std::span<const double> values, double q);
/// Median and Q3 - Q1, both type 7. Throws on empty input.
MedianIqr median_iqr(std::span<const double> values);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov distance with the asymptotic p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

}  // namespace btn
