#pragma once

// Observation model and the layer-wise backward update.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tagi/network.hpp"

namespace tagi {

template <typename T>
struct ObservationModel {
  T sigma_v = T(1);
  T eta = T(1);
  int epoch = 0;
};

/// sigma_v <- eta * sigma_v at an epoch boundary.
template <typename T>
ObservationModel<T> decay_noise(ObservationModel<T> obs) {
  obs.sigma_v *= obs.eta;
  ++obs.epoch;
  return obs;
}

/// Posterior of output units Z given Y = Z + V, V ~ N(0, sigma_v^2).
template <typename T>
GaussianVector<T> output_update(const GaussianVector<T>& z_out, std::span<const T> y, const ObservationModel<T>& obs) {
  if (y.size() != z_out.size()) throw PreconditionError("output_update: observation size mismatch");
  if (!(obs.sigma_v > T(0))) throw PreconditionError("output_update: sigma_v must be positive");
  GaussianVector<T> post = z_out;
  const T sv2 = obs.sigma_v * obs.sigma_v;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) throw DataError("output_update: non-finite observation");
    const T k = z_out.var[i] / (z_out.var[i] + sv2);
    post.mean[i] = z_out.mean[i] + k * (y[i] - z_out.mean[i]);
    post.var[i] = (T(1) - k) * z_out.var[i];
  }
  return post;
}

/// The same conditioning in innovation form for a batch of outputs;
/// y is batch-major like the state.
template <typename T>
Innovation<T> output_innovation(const BatchState<T>& out, std::span<const T> y, T sigma_v) {
  if (y.size() != out.mean.size()) throw PreconditionError("output_innovation: observation size mismatch");
  if (!(sigma_v > T(0))) throw PreconditionError("output_innovation: sigma_v must be positive");
  Innovation<T> d(out.batch, out.units);
  const T sv2 = sigma_v * sigma_v;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) throw DataError("output_innovation: non-finite observation");
    const T s = out.var[i] + sv2;
    d.dm[i] = (y[i] - out.mean[i]) / s;
    d.dS[i] = -T(1) / s;
  }
  return d;
}

/// Innovation that turns a prior into a given posterior.
template <typename T>
Innovation<T> innovation_between(const BatchState<T>& prior, const BatchState<T>& post) {
  Innovation<T> d(prior.batch, prior.units);
  for (std::size_t i = 0; i < prior.mean.size(); ++i) {
    const T s = prior.var[i];
    d.dm[i] = (post.mean[i] - prior.mean[i]) / s;
    d.dS[i] = (post.var[i] - prior.var[i]) / (s * s);
  }
  return d;
}

struct UpdateStats {
  std::size_t clamp_count = 0;
  double sum_abs_delta = 0;
  std::size_t delta_count = 0;

  double mean_abs_delta() const { return delta_count ? sum_abs_delta / static_cast<double>(delta_count) : 0.0; }
  UpdateStats& operator+=(const UpdateStats& o) {
    clamp_count += o.clamp_count;
    sum_abs_delta += o.sum_abs_delta;
    delta_count += o.delta_count;
    return *this;
  }
};

inline constexpr double kMinVariance = 1e-12;

/// Adds deltas to the store. Variances that would drop below kMinVariance are
/// clamped there and counted.
template <typename T>
UpdateStats apply_deltas(ParameterStore<T>& ps, const ParameterStore<T>& deltas, T min_var = T(kMinVariance)) {
  UpdateStats st;
  auto apply = [&](GaussianVector<T>& g, const GaussianVector<T>& d) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.mean[i] += d.mean[i];
      st.sum_abs_delta += std::abs(static_cast<double>(d.mean[i]));
      const T v = g.var[i] + d.var[i];
      if (!(v >= min_var)) {
        g.var[i] = min_var;
        ++st.clamp_count;
      } else {
        g.var[i] = v;
      }
    }
    st.delta_count += g.size();
  };
  for (std::size_t l = 0; l < ps.layers.size(); ++l) {
    apply(ps.layers[l].w, deltas.layers[l].w);
    apply(ps.layers[l].b, deltas.layers[l].b);
  }
  return st;
}

/// Conditions the most recent forward pass on batch observations y and
/// applies the summed parameter deltas once. The forward pass must already
/// have run on this batch.
template <typename T>
UpdateStats infer_minibatch(Network<T>& net, ParameterStore<T>& params, std::span<const T> y,
                            const ObservationModel<T>& obs) {
  const auto& out = net.output();
  const Innovation<T> d = output_innovation(out, y, obs.sigma_v);
  auto r = net.backward(params, d, true, false);
  return apply_deltas(params, r.deltas);
}

/// Forward + infer for one mini-batch.
template <typename T>
UpdateStats train_step(Network<T>& net, ParameterStore<T>& params, const BatchState<T>& x, std::span<const T> y,
                       const ObservationModel<T>& obs) {
  net.forward(params, x);
  return infer_minibatch(net, params, y, obs);
}

}  // namespace tagi
