#pragma once

// Forward moment propagation and backward innovation passing for every
// layer kind. The batched kernels here are what the network runs; the
// single-observation functions near the bottom wrap them for direct use.
//
// Backward quantities travel in innovation form: for a unit X with prior
// variance S_X, dm = (mu_post - mu_prior) / S_X and dS = (S_post - S_prior) / S_X^2.
// Every cross-covariance in the model is S_source * (linear coefficient), so
// a layer maps innovations on its output to innovations on its input by the
// transposed coefficients (squared for dS) without touching S_X itself.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tagi/error.hpp"
#include "tagi/gaussian.hpp"
#include "tagi/layer_spec.hpp"

namespace tagi {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Moments for a batch of observations, batch-major: [b * units + i].
template <typename T>
struct BatchState {
  std::size_t batch = 0;
  std::size_t units = 0;
  std::vector<T> mean;
  std::vector<T> var;

  BatchState() = default;
  BatchState(std::size_t b, std::size_t n) : batch(b), units(n), mean(b * n, T(0)), var(b * n, T(0)) {}

  GaussianVector<T> row(std::size_t b) const {
    return GaussianVector<T>(std::vector<T>(mean.begin() + b * units, mean.begin() + (b + 1) * units),
                             std::vector<T>(var.begin() + b * units, var.begin() + (b + 1) * units));
  }
  void set_row(std::size_t b, const GaussianVector<T>& g) {
    std::copy(g.mean.begin(), g.mean.end(), mean.begin() + b * units);
    std::copy(g.var.begin(), g.var.end(), var.begin() + b * units);
  }
  static BatchState from_rows(const std::vector<GaussianVector<T>>& rows) {
    if (rows.empty()) return {};
    BatchState s(rows.size(), rows.front().size());
    for (std::size_t b = 0; b < rows.size(); ++b) {
      if (rows[b].size() != s.units) throw PreconditionError("BatchState: ragged rows");
      s.set_row(b, rows[b]);
    }
    return s;
  }
};

template <typename T>
struct Innovation {
  std::size_t batch = 0;
  std::size_t units = 0;
  std::vector<T> dm;
  std::vector<T> dS;

  Innovation() = default;
  Innovation(std::size_t b, std::size_t n) : batch(b), units(n), dm(b * n, T(0)), dS(b * n, T(0)) {}

  Innovation& operator+=(const Innovation& o) {
    if (o.dm.size() != dm.size()) throw PreconditionError("Innovation: size mismatch");
    for (std::size_t i = 0; i < dm.size(); ++i) {
      dm[i] += o.dm[i];
      dS[i] += o.dS[i];
    }
    return *this;
  }
};

/// Weight and bias moments of one layer. Weights are row-major
/// [row][slot] where row is the output unit (fully connected) or the output
/// channel (convolutions). Also used to carry parameter deltas.
template <typename T>
struct LayerParams {
  GaussianVector<T> w;
  GaussianVector<T> b;
};

/// Forward record a layer leaves for the backward sweep.
template <typename T>
struct LayerCache {
  BatchState<T> z;  // pre-activation prior
  BatchState<T> a;  // layer output
  std::vector<T> jacobian;
  std::vector<MixtureStats<T>> norm_stats;
  MatX<T> cols;  // gathered input means, slots x (positions * batch)
  bool filled = false;
  bool consumed = false;

  void fill() {
    filled = true;
    consumed = false;
  }
  void consume(const char* who) {
    if (!filled) throw SequencingError(std::string(who) + ": layer cache is empty, run a forward pass first");
    if (consumed) throw SequencingError(std::string(who) + ": layer cache already consumed by an earlier sweep");
    consumed = true;
  }
};

namespace detail {

template <typename T>
void apply_activation(const Activation& act, LayerCache<T>& cache) {
  const std::size_t n = cache.z.mean.size();
  cache.a = BatchState<T>(cache.z.batch, cache.z.units);
  cache.jacobian.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v, j;
    activate(act, cache.z.mean[i], v, j);
    cache.a.mean[i] = v;
    cache.jacobian[i] = j;
    cache.a.var[i] = j * j * cache.z.var[i];
  }
}

template <typename T>
void check_params(const LayerSpec& spec, const LayerParams<T>& p) {
  if (p.w.size() != spec.weight_count() || p.b.size() != spec.bias_count())
    throw ConfigError("layer " + to_string(spec.kind) + ": parameter count mismatch (weights " +
                      std::to_string(p.w.size()) + " vs " + std::to_string(spec.weight_count()) + ")");
}

// Gathered input means/variances: slots x (positions * batch), column b*P+p.
template <typename T>
void gather_columns(const GatherMap& map, const BatchState<T>& in, MatX<T>& cm, MatX<T>& cv) {
  const std::size_t P = map.positions, S = map.slots, B = in.batch;
  cm.resize(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(P * B));
  cv.resize(cm.rows(), cm.cols());
  for (std::size_t b = 0; b < B; ++b) {
    const T* im = in.mean.data() + b * in.units;
    const T* iv = in.var.data() + b * in.units;
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t col = b * P + p;
      T* dm = cm.data() + col * S;
      T* dv = cv.data() + col * S;
      const std::int32_t* idx = map.index.data() + p * S;
      for (std::size_t k = 0; k < S; ++k) {
        const std::int32_t i = idx[k];
        dm[k] = i < 0 ? T(0) : im[i];
        dv[k] = i < 0 ? T(0) : iv[i];
      }
    }
  }
}

}  // namespace detail

/// Affine moment propagation for fully connected, convolution and transposed
/// convolution layers, followed by the linearized activation.
template <typename T>
void linear_forward(const LayerSpec& spec, const GatherMap& map, const LayerParams<T>& params,
                    const BatchState<T>& in, LayerCache<T>& cache) {
  detail::check_params(spec, params);
  if (in.units != spec.in_shape.size())
    throw ConfigError("layer " + to_string(spec.kind) + ": input has " + std::to_string(in.units) +
                      " units, expected " + std::to_string(spec.in_shape.size()));
  const bool dense = spec.op() == LayerKind::FullyConnected;
  const std::size_t B = in.batch;
  const std::size_t rows = spec.bias_count();
  const std::size_t S = spec.fan_in();
  const std::size_t P = dense ? 1 : map.positions;
  const std::size_t n_out = rows * P;

  MatX<T> cv;
  if (dense) {
    cache.cols = Eigen::Map<const MatX<T>>(in.mean.data(), static_cast<Eigen::Index>(S),
                                           static_cast<Eigen::Index>(B));
    cv = Eigen::Map<const MatX<T>>(in.var.data(), static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(B));
  } else {
    detail::gather_columns(map, in, cache.cols, cv);
  }
  const auto R = static_cast<Eigen::Index>(rows), C = static_cast<Eigen::Index>(S);
  Eigen::Map<const RowMatX<T>> wm(params.w.mean.data(), R, C);
  Eigen::Map<const RowMatX<T>> wv(params.w.var.data(), R, C);
  const MatX<T> zm = wm * cache.cols;
  const MatX<T> zv = wv * (cache.cols.cwiseAbs2() + cv) + wm.cwiseAbs2() * cv;

  cache.z = BatchState<T>(B, n_out);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < rows; ++c) {
      const T bm = params.b.mean[c], bv = params.b.var[c];
      T* om = cache.z.mean.data() + b * n_out + c * P;
      T* ov = cache.z.var.data() + b * n_out + c * P;
      for (std::size_t p = 0; p < P; ++p) {
        const auto col = static_cast<Eigen::Index>(b * P + p);
        om[p] = zm(static_cast<Eigen::Index>(c), col) + bm;
        ov[p] = zv(static_cast<Eigen::Index>(c), col) + bv;
      }
    }
  detail::apply_activation(spec.activation, cache);
  cache.norm_stats.clear();
  cache.fill();
}

/// Maps innovations on the layer output (post-activation) to parameter
/// deltas summed over the batch and, optionally, innovations on the input.
template <typename T>
void linear_backward(const LayerSpec& spec, const GatherMap& map, const LayerParams<T>& params,
                     LayerCache<T>& cache, const Innovation<T>& d_out, LayerParams<T>* delta,
                     Innovation<T>* d_in) {
  cache.consume("linear_backward");
  const bool dense = spec.op() == LayerKind::FullyConnected;
  const std::size_t B = d_out.batch;
  const std::size_t rows = spec.bias_count();
  const std::size_t S = spec.fan_in();
  const std::size_t P = dense ? 1 : map.positions;
  const std::size_t n_out = rows * P;
  if (d_out.units != n_out || B != cache.z.batch) throw PreconditionError("linear_backward: innovation shape");

  MatX<T> dm(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(P * B));
  MatX<T> ds(dm.rows(), dm.cols());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < rows; ++c)
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t u = b * n_out + c * P + p;
        const T j = cache.jacobian[u];
        dm(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b * P + p)) = j * d_out.dm[u];
        ds(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b * P + p)) = j * j * d_out.dS[u];
      }

  const auto R = static_cast<Eigen::Index>(rows), C = static_cast<Eigen::Index>(S);
  Eigen::Map<const RowMatX<T>> wm(params.w.mean.data(), R, C);
  if (delta) {
    Eigen::Map<const RowMatX<T>> wv(params.w.var.data(), R, C);
    const MatX<T> gm = dm * cache.cols.transpose();
    const MatX<T> gs = ds * cache.cols.cwiseAbs2().transpose();
    delta->w = GaussianVector<T>(params.w.size());
    delta->b = GaussianVector<T>(params.b.size());
    Eigen::Map<RowMatX<T>> dwm(delta->w.mean.data(), R, C);
    Eigen::Map<RowMatX<T>> dwv(delta->w.var.data(), R, C);
    dwm = wv.cwiseProduct(gm);
    dwv = wv.cwiseAbs2().cwiseProduct(gs);
    for (std::size_t c = 0; c < rows; ++c) {
      const T bv = params.b.var[c];
      delta->b.mean[c] = bv * dm.row(static_cast<Eigen::Index>(c)).sum();
      delta->b.var[c] = bv * bv * ds.row(static_cast<Eigen::Index>(c)).sum();
    }
  }
  if (d_in) {
    const std::size_t n_in = spec.in_shape.size();
    *d_in = Innovation<T>(B, n_in);
    const MatX<T> gm = wm.transpose() * dm;
    const MatX<T> gs = wm.cwiseAbs2().transpose() * ds;
    if (dense) {
      std::copy(gm.data(), gm.data() + gm.size(), d_in->dm.begin());
      std::copy(gs.data(), gs.data() + gs.size(), d_in->dS.begin());
    } else {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < P; ++p) {
          const std::size_t col = b * P + p;
          const std::int32_t* idx = map.index.data() + p * S;
          const T* cm = gm.data() + col * S;
          const T* cs = gs.data() + col * S;
          T* om = d_in->dm.data() + b * n_in;
          T* os = d_in->dS.data() + b * n_in;
          for (std::size_t k = 0; k < S; ++k) {
            if (idx[k] < 0) continue;
            om[idx[k]] += cm[k];
            os[idx[k]] += cs[k];
          }
        }
    }
  }
}

/// Average of the K window elements; padded taps count as zero in the
/// window but keep the 1/K divisor.
template <typename T>
void avg_pool_forward_batch(const LayerSpec& spec, const GatherMap& map, const BatchState<T>& in,
                            LayerCache<T>& cache) {
  const std::size_t B = in.batch, C = static_cast<std::size_t>(spec.in_shape.depth);
  const std::size_t plane_in = spec.in_shape.plane(), P = map.positions, S = map.slots;
  if (in.units != spec.in_shape.size()) throw ConfigError("avgpool: input shape mismatch");
  const T inv = T(1) / static_cast<T>(S);
  const T inv2 = inv * inv;
  cache.a = BatchState<T>(B, C * P);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const T* im = in.mean.data() + b * in.units + c * plane_in;
      const T* iv = in.var.data() + b * in.units + c * plane_in;
      for (std::size_t p = 0; p < P; ++p) {
        T m = 0, v = 0;
        const std::int32_t* idx = map.index.data() + p * S;
        for (std::size_t k = 0; k < S; ++k)
          if (idx[k] >= 0) {
            m += im[idx[k]];
            v += iv[idx[k]];
          }
        const std::size_t o = b * C * P + c * P + p;
        cache.a.mean[o] = m * inv;
        cache.a.var[o] = v * inv2;
      }
    }
  cache.z = {};
  cache.jacobian.clear();
  cache.norm_stats.clear();
  cache.fill();
}

template <typename T>
void avg_pool_backward(const LayerSpec& spec, const GatherMap& map, LayerCache<T>& cache,
                       const Innovation<T>& d_out, Innovation<T>& d_in) {
  cache.consume("avg_pool_backward");
  const std::size_t B = d_out.batch, C = static_cast<std::size_t>(spec.in_shape.depth);
  const std::size_t plane_in = spec.in_shape.plane(), P = map.positions, S = map.slots;
  const T inv = T(1) / static_cast<T>(S);
  const T inv2 = inv * inv;
  d_in = Innovation<T>(B, spec.in_shape.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      T* om = d_in.dm.data() + b * d_in.units + c * plane_in;
      T* os = d_in.dS.data() + b * d_in.units + c * plane_in;
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t o = b * C * P + c * P + p;
        const T gm = d_out.dm[o] * inv, gs = d_out.dS[o] * inv2;
        const std::int32_t* idx = map.index.data() + p * S;
        for (std::size_t k = 0; k < S; ++k)
          if (idx[k] >= 0) {
            om[idx[k]] += gm;
            os[idx[k]] += gs;
          }
      }
    }
}

namespace detail {

template <typename T>
MixtureStats<T> guard_stats(MixtureStats<T> s, const LayerSpec& spec) {
  if (spec.identity_limit) return {T(0), T(1)};
  if (!(s.sigma >= static_cast<T>(spec.norm_eps))) s.sigma = static_cast<T>(spec.norm_eps);
  return s;
}

}  // namespace detail

/// Layer normalization: one mixture over all units of each observation.
template <typename T>
void layer_norm_forward_batch(const LayerSpec& spec, const BatchState<T>& in, LayerCache<T>& cache) {
  const std::size_t B = in.batch, n = in.units;
  if (n == 0) throw PreconditionError("layer_norm: empty layer");
  cache.a = BatchState<T>(B, n);
  cache.norm_stats.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    const std::span<const T> m(in.mean.data() + b * n, n), v(in.var.data() + b * n, n);
    const auto st = detail::guard_stats(mixture_reduce<T>(m, v), spec);
    cache.norm_stats[b] = st;
    const T inv = T(1) / st.sigma;
    for (std::size_t i = 0; i < n; ++i) {
      cache.a.mean[b * n + i] = (m[i] - st.mu) * inv;
      cache.a.var[b * n + i] = v[i] * inv * inv;
    }
  }
  cache.z = {};
  cache.jacobian.clear();
  cache.fill();
}

/// Batch normalization: one mixture per unit over the B observations.
template <typename T>
void batch_norm_forward_batch(const LayerSpec& spec, const BatchState<T>& in, LayerCache<T>& cache) {
  const std::size_t B = in.batch, n = in.units;
  if (B < 2 && !spec.identity_limit) throw ConfigError("batch_norm: batch size must be at least 2");
  cache.a = BatchState<T>(B, n);
  cache.norm_stats.resize(n);
  std::vector<T> m(B), v(B);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < B; ++b) {
      m[b] = in.mean[b * n + i];
      v[b] = in.var[b * n + i];
    }
    const auto st = detail::guard_stats(mixture_reduce<T>(std::span<const T>(m), std::span<const T>(v)), spec);
    cache.norm_stats[i] = st;
    const T inv = T(1) / st.sigma;
    for (std::size_t b = 0; b < B; ++b) {
      cache.a.mean[b * n + i] = (m[b] - st.mu) * inv;
      cache.a.var[b * n + i] = v[b] * inv * inv;
    }
  }
  cache.z = {};
  cache.jacobian.clear();
  cache.fill();
}

template <typename T>
void norm_backward(const LayerSpec& spec, LayerCache<T>& cache, const Innovation<T>& d_out, Innovation<T>& d_in) {
  cache.consume("norm_backward");
  const std::size_t B = d_out.batch, n = d_out.units;
  d_in = Innovation<T>(B, n);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      const T s = spec.kind == LayerKind::LayerNorm ? cache.norm_stats[b].sigma : cache.norm_stats[i].sigma;
      const T inv = T(1) / s;
      d_in.dm[b * n + i] = d_out.dm[b * n + i] * inv;
      d_in.dS[b * n + i] = d_out.dS[b * n + i] * inv * inv;
    }
}

// ---------------------------------------------------------------------------
// Single-observation operations.

/// Pre-activation moments of a dense layer; w is row-major [out][in].
template <typename T>
GaussianVector<T> fc_forward(const GaussianVector<T>& a_in, const GaussianVector<T>& w, const GaussianVector<T>& b) {
  const std::size_t n_in = a_in.size(), n_out = b.size();
  if (w.size() != n_in * n_out)
    throw ConfigError("fc_forward: weight count " + std::to_string(w.size()) + " does not match " +
                      std::to_string(n_out) + "x" + std::to_string(n_in));
  LayerSpec spec;
  spec.kind = LayerKind::FullyConnected;
  spec.in_shape = {static_cast<int>(n_in), 1, 1};
  spec.out_shape = {static_cast<int>(n_out), 1, 1};
  LayerCache<T> cache;
  linear_forward(spec, GatherMap{}, LayerParams<T>{w, b}, BatchState<T>::from_rows({a_in}), cache);
  return cache.z.row(0);
}

namespace detail {

template <typename T>
GaussianVector<T> spatial_forward(const char* name, LayerKind kind, const GaussianVector<T>& a_in,
                                  const GaussianVector<T>& w, const GaussianVector<T>& b, LayerSpec spec) {
  if (spec.op() != kind) throw ConfigError(std::string(name) + ": wrong layer kind");
  const Shape expect = infer_out_shape(spec);
  if (expect != spec.out_shape)
    throw ConfigError(std::string(name) + ": output shape " + to_string(spec.out_shape) +
                      " inconsistent with kernel/padding/stride (expected " + to_string(expect) + ")");
  if (a_in.size() != spec.in_shape.size()) throw ConfigError(std::string(name) + ": input size mismatch");
  spec.activation = Activation::identity();
  LayerCache<T> cache;
  linear_forward(spec, build_map(spec), LayerParams<T>{w, b}, BatchState<T>::from_rows({a_in}), cache);
  return cache.z.row(0);
}

}  // namespace detail

/// Weights are [out_channel][in_channel][ky][kx]; one bias per out channel.
template <typename T>
GaussianVector<T> conv_forward(const GaussianVector<T>& a_in, const GaussianVector<T>& w, const GaussianVector<T>& b,
                               const LayerSpec& spec) {
  return detail::spatial_forward("conv_forward", LayerKind::Conv2d, a_in, w, b, spec);
}

template <typename T>
GaussianVector<T> transposed_conv_forward(const GaussianVector<T>& a_in, const GaussianVector<T>& w,
                                          const GaussianVector<T>& b, const LayerSpec& spec) {
  return detail::spatial_forward("transposed_conv_forward", LayerKind::TransposedConv2d, a_in, w, b, spec);
}

template <typename T>
GaussianVector<T> avg_pool_forward(const GaussianVector<T>& a_in, const LayerSpec& spec) {
  if (spec.kind != LayerKind::AvgPool) throw ConfigError("avg_pool_forward: wrong layer kind");
  if (infer_out_shape(spec) != spec.out_shape) throw ConfigError("avg_pool_forward: inconsistent output shape");
  LayerCache<T> cache;
  avg_pool_forward_batch(spec, build_map(spec), BatchState<T>::from_rows({a_in}), cache);
  return cache.a.row(0);
}

template <typename T>
std::pair<GaussianVector<T>, MixtureStats<T>> layer_norm_forward(const GaussianVector<T>& a, double eps = 1e-6) {
  if (a.empty()) throw PreconditionError("layer_norm_forward: empty layer");
  LayerSpec spec;
  spec.kind = LayerKind::LayerNorm;
  spec.in_shape = spec.out_shape = {static_cast<int>(a.size()), 1, 1};
  spec.norm_eps = eps;
  LayerCache<T> cache;
  layer_norm_forward_batch(spec, BatchState<T>::from_rows({a}), cache);
  return {cache.a.row(0), cache.norm_stats[0]};
}

template <typename T>
std::pair<std::vector<GaussianVector<T>>, std::vector<MixtureStats<T>>> batch_norm_forward(
    const std::vector<GaussianVector<T>>& batch, double eps = 1e-6) {
  if (batch.size() < 2) throw ConfigError("batch_norm_forward: batch size must be at least 2");
  LayerSpec spec;
  spec.kind = LayerKind::BatchNorm;
  spec.in_shape = spec.out_shape = {static_cast<int>(batch.front().size()), 1, 1};
  spec.norm_eps = eps;
  LayerCache<T> cache;
  batch_norm_forward_batch(spec, BatchState<T>::from_rows(batch), cache);
  std::vector<GaussianVector<T>> out;
  for (std::size_t b = 0; b < batch.size(); ++b) out.push_back(cache.a.row(b));
  return {std::move(out), cache.norm_stats};
}

// ---------------------------------------------------------------------------
// Explicit cross-covariances between a layer and the next one.

template <typename T>
struct CrossCovEntry {
  std::size_t src;  // hidden unit, weight or bias index at layer j
  std::size_t dst;  // hidden unit at layer j+1
  T value;
};

template <typename T>
struct CrossCov {
  std::vector<CrossCovEntry<T>> dz_dzplus;
  std::vector<CrossCovEntry<T>> dw_dzplus;
  std::vector<CrossCovEntry<T>> db_dzplus;
};

/// Covariances of the layer-j hidden states Z and the next layer's weights
/// and biases with the next layer's hidden states Z+, when the next layer
/// reads normalized activations (A - mu_A) / sigma_A. `source` holds Z, J and
/// the un-normalized activations A for observation 0; its norm_stats carry
/// (mu_A, sigma_A), and an empty norm_stats means the plain case (0, 1).
template <typename T>
CrossCov<T> cross_cov_normalized(const LayerCache<T>& source, const LayerSpec& next, const LayerParams<T>& params) {
  if (!source.filled) throw SequencingError("cross_cov_normalized: layer cache is empty");
  if (!next.has_params()) throw ConfigError("cross_cov_normalized: next layer has no parameters");
  detail::check_params(next, params);
  const std::size_t n_in = next.in_shape.size();
  if (source.a.units != n_in || source.z.units != n_in || source.jacobian.size() < n_in)
    throw PreconditionError("cross_cov_normalized: cache does not match the next layer input");
  const MixtureStats<T> st = source.norm_stats.empty() ? MixtureStats<T>{T(0), T(1)} : source.norm_stats.front();
  const bool dense = next.op() == LayerKind::FullyConnected;
  const GatherMap map = dense ? GatherMap{} : build_map(next);
  const std::size_t rows = next.bias_count(), S = next.fan_in(), P = dense ? 1 : map.positions;

  CrossCov<T> cc;
  for (std::size_t c = 0; c < rows; ++c)
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t dst = c * P + p;
      for (std::size_t k = 0; k < S; ++k) {
        const std::int64_t idx = dense ? static_cast<std::int64_t>(k) : map.at(p, k);
        if (idx < 0) continue;
        const auto i = static_cast<std::size_t>(idx);
        const std::size_t wi = c * S + k;
        cc.dz_dzplus.push_back({i, dst, source.z.var[i] * source.jacobian[i] * params.w.mean[wi] / st.sigma});
        cc.dw_dzplus.push_back(
            {wi, dst, params.w.var[wi] * source.a.mean[i] / st.sigma - st.mu / st.sigma * params.w.var[wi]});
      }
      cc.db_dzplus.push_back({c, dst, params.b.var[c]});
    }
  return cc;
}

template <typename T>
struct SmoothResult {
  GaussianVector<T> z_posterior;
  LayerParams<T> delta;
};

/// Covariance-form update of layer j from the posterior of layer j+1:
/// theta += sum_u c_u / S+_u * (mu+post - mu+prior), and the variance with
/// the squared gain against (S+post - S+prior). Gains use the prior moments
/// of Z+ recorded by the forward pass.
template <typename T>
SmoothResult<T> smooth_layer(LayerCache<T>& cache_j, const GaussianVector<T>& prior_jplus,
                             const GaussianVector<T>& posterior_jplus, const CrossCov<T>& cc,
                             std::size_t n_weights, std::size_t n_bias) {
  cache_j.consume("smooth_layer");
  if (prior_jplus.size() != posterior_jplus.size()) throw PreconditionError("smooth_layer: size mismatch");
  SmoothResult<T> r;
  r.z_posterior = cache_j.z.row(0);
  r.delta.w = GaussianVector<T>(n_weights);
  r.delta.b = GaussianVector<T>(n_bias);
  auto accumulate = [&](const std::vector<CrossCovEntry<T>>& entries, std::vector<T>& mean, std::vector<T>& var) {
    for (const auto& e : entries) {
      const T gain = e.value / prior_jplus.var[e.dst];
      mean[e.src] += gain * (posterior_jplus.mean[e.dst] - prior_jplus.mean[e.dst]);
      var[e.src] += gain * gain * (posterior_jplus.var[e.dst] - prior_jplus.var[e.dst]);
    }
  };
  accumulate(cc.dz_dzplus, r.z_posterior.mean, r.z_posterior.var);
  accumulate(cc.dw_dzplus, r.delta.w.mean, r.delta.w.var);
  accumulate(cc.db_dzplus, r.delta.b.mean, r.delta.b.var);
  return r;
}

}  // namespace tagi
