#pragma once

// Classification metrics over per-example prediction records.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "tagi/error.hpp"

namespace tagi {

struct PredictionRecord {
  std::size_t label = 0;      // true class
  std::size_t predicted = 0;  // argmax class
  double confidence = 0;      // probability of the predicted class
  double p_true = 0;          // probability of the true class

  bool correct() const { return label == predicted; }
};

struct MetricsReport {
  std::size_t count = 0;
  double error_rate = 0;
  double nll = 0;
  double ece = 0;
  double auroc = 0;
};

inline double error_rate(std::span<const PredictionRecord> r) {
  if (r.empty()) throw PreconditionError("error_rate: no records");
  std::size_t wrong = 0;
  for (const auto& x : r) wrong += !x.correct();
  return static_cast<double>(wrong) / static_cast<double>(r.size());
}

/// Mean negative log probability of the true class. Probabilities are
/// floored at the smallest normal double so one confident miss stays finite.
inline double negative_log_likelihood(std::span<const PredictionRecord> r) {
  if (r.empty()) throw PreconditionError("negative_log_likelihood: no records");
  double s = 0;
  for (const auto& x : r) s -= std::log(std::max(x.p_true, std::numeric_limits<double>::min()));
  return s / static_cast<double>(r.size());
}

/// Bin b covers confidences in (b/n, (b+1)/n]; a confidence of exactly 0
/// falls into bin 0.
inline std::size_t calibration_bin(double conf, std::size_t bins) {
  const double n = static_cast<double>(bins);
  auto b = static_cast<std::ptrdiff_t>(std::ceil(conf * n)) - 1;
  b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
  // ceil() can land one bin off when conf*n rounds across an edge.
  while (b > 0 && conf <= static_cast<double>(b) / n) --b;
  while (b + 1 < static_cast<std::ptrdiff_t>(bins) && conf > static_cast<double>(b + 1) / n) ++b;
  return static_cast<std::size_t>(b);
}

/// Expected calibration error with equal-width confidence bins:
/// sum over bins of (n_b / N) * |accuracy_b - mean confidence_b|.
inline double expected_calibration_error(std::span<const PredictionRecord> r, std::size_t bins = 15) {
  if (r.empty()) throw PreconditionError("expected_calibration_error: no records");
  if (bins == 0) throw PreconditionError("expected_calibration_error: bin count must be positive");
  std::vector<double> conf(bins, 0.0), acc(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (const auto& x : r) {
    const std::size_t b = calibration_bin(x.confidence, bins);
    conf[b] += x.confidence;
    acc[b] += x.correct() ? 1.0 : 0.0;
    ++count[b];
  }
  const double n = static_cast<double>(r.size());
  double ece = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (!count[b]) continue;
    const double nb = static_cast<double>(count[b]);
    ece += (nb / n) * std::abs(acc[b] / nb - conf[b] / nb);
  }
  return ece;
}

/// Area under the ROC curve for separating correct from incorrect
/// predictions by confidence (Mann-Whitney statistic with tied scores
/// sharing their average rank). Returns 1.0 when either group is empty.
inline double auroc_correctness(std::span<const PredictionRecord> r) {
  if (r.empty()) throw PreconditionError("auroc_correctness: no records");
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r[a].confidence < r[b].confidence; });
  double rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && r[order[j]].confidence == r[order[i]].confidence) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (r[order[k]].correct()) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = r.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return 1.0;
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1) / 2;
  return u / (np * static_cast<double>(n_neg));
}

inline MetricsReport summarize(std::span<const PredictionRecord> r, std::size_t ece_bins = 15) {
  MetricsReport m;
  m.count = r.size();
  m.error_rate = error_rate(r);
  m.nll = negative_log_likelihood(r);
  m.ece = expected_calibration_error(r, ece_bins);
  m.auroc = auroc_correctness(r);
  return m;
}

}  // namespace tagi
