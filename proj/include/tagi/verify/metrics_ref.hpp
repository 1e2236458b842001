#pragma once

// Brute-force reference implementations of the calibration metrics and a
// generator of synthetic prediction records with ties and bin-edge values.

#include <cmath>
#include <random>
#include <vector>

#include "tagi/metrics.hpp"

namespace tagi::verify {

inline std::vector<PredictionRecord> synthetic_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::uniform_int_distribution<int> cls(0, 9);
  std::vector<PredictionRecord> r(n);
  for (auto& x : r) {
    // Coarse confidences so ties and bin edges both occur.
    x.confidence = std::round(u(rng) * 60) / 60;
    x.label = static_cast<std::size_t>(cls(rng));
    x.predicted = u(rng) < x.confidence ? x.label : static_cast<std::size_t>(cls(rng));
    x.p_true = x.correct() ? x.confidence : (1 - x.confidence) / 9;
  }
  return r;
}

// Reference binning written from the definition: bin b holds confidences
// in (b/15, (b+1)/15], with 0 going to the first bin.
inline double brute_ece(const std::vector<PredictionRecord>& r, int bins) {
  double total = 0;
  for (int b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / bins, hi = static_cast<double>(b + 1) / bins;
    double acc = 0, conf = 0, n = 0;
    for (const auto& x : r) {
      const bool in = (x.confidence > lo || (b == 0 && x.confidence == 0)) && x.confidence <= hi;
      if (!in) continue;
      acc += x.correct();
      conf += x.confidence;
      n += 1;
    }
    if (n > 0) total += n / static_cast<double>(r.size()) * std::abs(acc / n - conf / n);
  }
  return total;
}

// Probability that a random correct prediction outscores a random incorrect
// one, ties counting half.
inline double brute_auroc(const std::vector<PredictionRecord>& r) {
  double wins = 0, pairs = 0;
  for (const auto& p : r) {
    if (!p.correct()) continue;
    for (const auto& q : r) {
      if (q.correct()) continue;
      pairs += 1;
      wins += p.confidence > q.confidence ? 1.0 : p.confidence == q.confidence ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace tagi::verify
