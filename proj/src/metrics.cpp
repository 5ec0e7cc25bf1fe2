#include "btn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace btn {

namespace {

struct ClassCounts {
  std::size_t signal = 0;
  std::size_t background = 0;
};

ClassCounts count_classes(std::span<const ScoredSample> samples) {
  ClassCounts c;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw std::invalid_argument("non-finite score");
    if (s.label == 1) ++c.signal;
    else if (s.label == 0) ++c.background;
    else throw std::invalid_argument("label must be 0 or 1");
  }
  if (c.signal == 0 || c.background == 0)
    throw std::invalid_argument("both signal and background samples are required");
  return c;
}

// Cumulative (signal, background) counts passing each distinct cut, from the
// highest score down.
struct Cut {
  double threshold;
  std::size_t signal;
  std::size_t background;
};

std::vector<Cut> scan_cuts(std::span<const ScoredSample> samples) {
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& x, const ScoredSample& y) { return x.score > y.score; });
  std::vector<Cut> cuts;
  std::size_t s = 0, b = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    (sorted[i].label == 1 ? s : b) += 1;
    if (i + 1 == sorted.size() || sorted[i + 1].score != sorted[i].score)
      cuts.push_back({sorted[i].score, s, b});
  }
  return cuts;
}

// Efficiencies are ratios of integers; compare against the target with a
// small slack so that e.g. 7/10 counts as reaching 0.7.
constexpr double kEfficiencySlack = 1e-12;

}  // namespace

double roc_auc(std::span<const ScoredSample> samples) {
  const ClassCounts n = count_classes(samples);
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& x, const ScoredSample& y) { return x.score < y.score; });
  // Mann-Whitney U with mid-ranks for ties.
  double signal_rank_sum = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (sorted[k].label == 1) signal_rank_sum += mid_rank;
    i = j;
  }
  const double ns = static_cast<double>(n.signal), nb = static_cast<double>(n.background);
  return (signal_rank_sum - ns * (ns + 1.0) / 2.0) / (ns * nb);
}

double rejection_at_efficiency(std::span<const ScoredSample> samples, double eff) {
  if (!(eff > 0.0 && eff < 1.0)) throw std::invalid_argument("efficiency must lie in (0, 1)");
  const ClassCounts n = count_classes(samples);
  for (const Cut& c : scan_cuts(samples)) {
    const double tpr = static_cast<double>(c.signal) / static_cast<double>(n.signal);
    if (tpr >= eff - kEfficiencySlack) {
      if (c.background == 0) return kInfiniteRejection;
      return static_cast<double>(n.background) / static_cast<double>(c.background);
    }
  }
  return 1.0;  // unreachable: the lowest cut passes everything
}

std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples) {
  const ClassCounts n = count_classes(samples);
  std::vector<RocPoint> curve;
  for (const Cut& c : scan_cuts(samples)) {
    const double eff = static_cast<double>(c.signal) / static_cast<double>(n.signal);
    const double rej = c.background == 0
                           ? kInfiniteRejection
                           : static_cast<double>(n.background) / static_cast<double>(c.background);
    curve.push_back({eff, rej});
  }
  return curve;
}

RocSummary summarize_roc(std::span<const ScoredSample> samples) {
  const ClassCounts n = count_classes(samples);
  RocSummary s;
  s.auc = roc_auc(samples);
  s.r70 = rejection_at_efficiency(samples, 0.70);
  s.r85 = rejection_at_efficiency(samples, 0.85);
  s.n_signal = n.signal;
  s.n_background = n.background;
  s.curve = roc_curve(samples);
  return s;
}

void write_roc_curve(const std::filesystem::path& path, std::span<const RocPoint> curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# efficiency rejection\n" << std::setprecision(17);
  for (const auto& p : curve) out << p.efficiency << ' ' << p.rejection << '\n';
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = h - static_cast<double>(lo);
  // Keeps infinite entries (unbounded rejection) from turning into NaN.
  if (frac == 0.0 || v[hi] == v[lo]) return v[lo];
  return v[lo] + frac * (v[hi] - v[lo]);
}

MedianIqr median_iqr(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median_iqr of empty input");
  const double q1 = quantile(values, 0.25), q3 = quantile(values, 0.75);
  return {quantile(values, 0.5), q1 == q3 ? 0.0 : q3 - q1};
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double na = static_cast<double>(x.size()), nb = static_cast<double>(y.size());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsResult r;
  r.statistic = d;
  if (d == 0.0) return r;
  // Kolmogorov distribution tail with Stephens' small-sample correction.
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
    sign = -sign;
  }
  r.p_value = std::clamp(2.0 * sum, 0.0, 1.0);
  return r;
}

}  // namespace btn
