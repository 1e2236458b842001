#pragma once

// Classification training loop, evaluation and the per-epoch metrics log.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tagi/data.hpp"
#include "tagi/inference.hpp"
#include "tagi/metrics.hpp"
#include "tagi/network.hpp"

namespace tagi {

struct TrainConfig {
  std::size_t batch = 16;
  int epochs = 50;
  double sigma_v0 = 1.0;
  double eta = 0.975;
  std::uint64_t seed = 0;
  std::size_t ece_bins = 15;
};

struct EpochLog {
  int epoch = 0;
  double train_error = 0;
  MetricsReport test;
  double sigma_v = 0;  // noise used during this epoch
  std::size_t clamp_count = 0;
  double mean_abs_delta = 0;
  double seconds = 0;
};

/// epoch, train_err, test_err, nll, ece, auroc, sigma_v, clamp_count
inline std::string format_metrics_line(const EpochLog& e) {
  std::ostringstream os;
  os.precision(6);
  os << e.epoch << '\t' << e.train_error << '\t' << e.test.error_rate << '\t' << e.test.nll << '\t' << e.test.ece
     << '\t' << e.test.auroc << '\t' << e.sigma_v << '\t' << e.clamp_count;
  return os.str();
}

inline std::string metrics_header() { return "epoch\ttrain_err\ttest_err\tnll\tece\tauroc\tsigma_v\tclamp_count"; }

inline bool has_batch_norm(const NetworkConfig& cfg) {
  return std::any_of(cfg.layers.begin(), cfg.layers.end(),
                     [](const LayerSpec& l) { return l.kind == LayerKind::BatchNorm && !l.identity_limit; });
}

/// Splits [0, n) into consecutive batches of size B. With batch
/// normalization a trailing batch of one is merged into its predecessor.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t B, bool merge_single) {
  if (B == 0) throw PreconditionError("batch size must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> r;
  for (std::size_t s = 0; s < n; s += B) r.emplace_back(s, std::min(n, s + B));
  if (merge_single && r.size() > 1 && r.back().second - r.back().first == 1) {
    r[r.size() - 2].second = r.back().second;
    r.pop_back();
  }
  return r;
}

template <typename T>
BatchState<T> gather_batch(const ImageDataset& d, const std::vector<std::size_t>& order, std::size_t lo,
                           std::size_t hi) {
  BatchState<T> x(hi - lo, d.shape.size());
  for (std::size_t i = lo; i < hi; ++i) d.fill<T>(order[i], x.mean.data() + (i - lo) * x.units);
  return x;
}

template <typename T>
void check_finite_output(const BatchState<T>& out, const std::string& where) {
  for (std::size_t i = 0; i < out.mean.size(); ++i)
    if (!std::isfinite(out.mean[i]) || !std::isfinite(out.var[i]) || out.var[i] < T(0))
      throw NumericError(where + ": non-finite output moment at unit " + std::to_string(i % out.units) +
                         " of example " + std::to_string(i / out.units) + " (mean " + std::to_string(out.mean[i]) +
                         ", var " + std::to_string(out.var[i]) + ")");
}

template <typename T>
PredictionRecord make_record(std::size_t label, std::span<const T> means) {
  const auto c = classify<T>(means);
  return {label, c.label, c.scores[c.label], c.scores.at(label)};
}

/// Forward passes over a labeled set in batches of B, in order.
template <typename T>
std::vector<PredictionRecord> predict(Network<T>& net, const ParameterStore<T>& ps, const ImageDataset& d,
                                      std::size_t B) {
  if (d.size() == 0) throw PreconditionError("evaluate: empty dataset");
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PredictionRecord> rec;
  rec.reserve(d.size());
  for (auto [lo, hi] : batch_ranges(d.size(), B, has_batch_norm(net.config()))) {
    const auto& out = net.forward(ps, gather_batch<T>(d, order, lo, hi));
    check_finite_output(out, "evaluate");
    for (std::size_t b = 0; b < out.batch; ++b)
      rec.push_back(make_record<T>(d.labels[lo + b], std::span<const T>(out.mean.data() + b * out.units, out.units)));
  }
  return rec;
}

template <typename T>
MetricsReport evaluate(Network<T>& net, const ParameterStore<T>& ps, const ImageDataset& d, std::size_t B,
                       std::size_t ece_bins = 15) {
  const auto rec = predict(net, ps, d, B);
  return summarize(rec, ece_bins);
}

/// One pass over the training set in a seeded shuffled order. Returns the
/// error rate of the predictions made just before each update.
template <typename T>
double train_epoch(Network<T>& net, ParameterStore<T>& ps, const ImageDataset& train, const ObservationModel<T>& obs,
                   std::size_t B, std::uint64_t shuffle_seed, UpdateStats& stats) {
  if (train.size() == 0) throw PreconditionError("train: empty training set");
  const std::size_t classes = net.output_units();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t wrong = 0;
  for (auto [lo, hi] : batch_ranges(train.size(), B, has_batch_norm(net.config()))) {
    const auto& out = net.forward(ps, gather_batch<T>(train, order, lo, hi));
    check_finite_output(out, "train");
    std::vector<T> y(out.mean.size(), T(0));
    for (std::size_t b = 0; b < out.batch; ++b) {
      const std::size_t label = train.labels[order[lo + b]];
      const auto t = encode_target<T>(label, classes, obs.sigma_v);
      std::copy(t.y.begin(), t.y.end(), y.begin() + b * classes);
      wrong += classify<T>(std::span<const T>(out.mean.data() + b * classes, classes)).label != label;
    }
    stats += infer_minibatch(net, ps, std::span<const T>(y), obs);
  }
  return static_cast<double>(wrong) / static_cast<double>(train.size());
}

struct TrainResult {
  std::vector<EpochLog> history;
  MetricsReport initial;  // evaluation before any update
};

/// Epoch loop: shuffle, mini-batch updates, noise decay, evaluation. The
/// callback sees each epoch's log as soon as it is complete.
template <typename T>
TrainResult train(Network<T>& net, ParameterStore<T>& ps, const ImageDataset& train_set, const ImageDataset& test_set,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (!(cfg.sigma_v0 > 0)) throw PreconditionError("train: sigma_v0 must be positive");
  if (!(cfg.eta > 0 && cfg.eta <= 1)) throw PreconditionError("train: eta must be in (0, 1]");
  TrainResult r;
  ObservationModel<T> obs{static_cast<T>(cfg.sigma_v0), static_cast<T>(cfg.eta), 0};
  if (cfg.epochs == 0) {
    r.initial = evaluate(net, ps, test_set, cfg.batch, cfg.ece_bins);
    return r;
  }
  for (int e = 1; e <= cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = e;
    log.sigma_v = static_cast<double>(obs.sigma_v);
    UpdateStats st;
    log.train_error = train_epoch(net, ps, train_set, obs, cfg.batch, cfg.seed + static_cast<std::uint64_t>(e), st);
    log.clamp_count = st.clamp_count;
    log.mean_abs_delta = st.mean_abs_delta();
    obs = decay_noise(obs);
    log.test = evaluate(net, ps, test_set, cfg.batch, cfg.ece_bins);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return r;
}

}  // namespace tagi
