#pragma once

#include <limits>
#include <set>
#include <span>

#include "btn/metrics.hpp"

// Exhaustive reference implementations: every pair, every threshold.
namespace btn::oracle {

inline double auc_pairs(std::span<const ScoredSample> s) {
  double wins = 0;
  double pairs = 0;
  for (const auto& a : s)
    for (const auto& b : s)
      if (a.label == 1 && b.label == 0) {
        pairs += 1;
        if (a.score > b.score) wins += 1;
        else if (a.score == b.score) wins += 0.5;
      }
  return wins / pairs;
}

// Tries every observed score as the cut (pass: score >= cut) and keeps the
// largest one reaching the efficiency.
inline double rejection_scan(std::span<const ScoredSample> s, double eff) {
  std::set<double> cuts;
  double n_sig = 0, n_bkg = 0;
  for (const auto& x : s) {
    cuts.insert(x.score);
    (x.label == 1 ? n_sig : n_bkg) += 1;
  }
  for (auto it = cuts.rbegin(); it != cuts.rend(); ++it) {
    double sig = 0, bkg = 0;
    for (const auto& x : s)
      if (x.score >= *it) (x.label == 1 ? sig : bkg) += 1;
    if (sig / n_sig >= eff) return bkg == 0 ? std::numeric_limits<double>::infinity() : n_bkg / bkg;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace btn::oracle
