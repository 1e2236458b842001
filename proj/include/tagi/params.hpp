#pragma once

#include <cstddef>
#include <cstring>
#include <random>
#include <vector>

#include "tagi/layers.hpp"

namespace tagi {

/// Per-layer Gaussian weights and biases, indexed like the network's layers
/// (layers without parameters hold empty vectors). The same type carries
/// accumulated parameter deltas.
template <typename T>
struct ParameterStore {
  std::vector<LayerParams<T>> layers;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }

  static ParameterStore zeros_like(const ParameterStore& o) {
    ParameterStore z;
    z.layers.resize(o.layers.size());
    for (std::size_t i = 0; i < o.layers.size(); ++i) {
      z.layers[i].w = GaussianVector<T>(o.layers[i].w.size());
      z.layers[i].b = GaussianVector<T>(o.layers[i].b.size());
    }
    return z;
  }

  ParameterStore& operator+=(const ParameterStore& o) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto add = [](std::vector<T>& a, const std::vector<T>& b) {
        for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
      };
      add(layers[i].w.mean, o.layers[i].w.mean);
      add(layers[i].w.var, o.layers[i].w.var);
      add(layers[i].b.mean, o.layers[i].b.mean);
      add(layers[i].b.var, o.layers[i].b.var);
    }
    return *this;
  }

  /// Bitwise equality of every stored value.
  bool bitwise_equal(const ParameterStore& o) const {
    if (layers.size() != o.layers.size()) return false;
    auto same = [](const std::vector<T>& a, const std::vector<T>& b) {
      return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
    };
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (!same(layers[i].w.mean, o.layers[i].w.mean) || !same(layers[i].w.var, o.layers[i].w.var) ||
          !same(layers[i].b.mean, o.layers[i].b.mean) || !same(layers[i].b.var, o.layers[i].b.var))
        return false;
    return true;
  }
};

struct InitPolicy {
  double gain = 1.0;  // weight variance = gain * 2 / fan_in
};

/// He-style Gaussian initialization: weight and bias means drawn from
/// N(0, 2/fan_in), variances set to 2/fan_in.
template <typename T>
ParameterStore<T> init_parameters(const std::vector<LayerSpec>& layers, std::uint64_t seed, InitPolicy policy = {}) {
  ParameterStore<T> ps;
  ps.layers.resize(layers.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i];
    if (!spec.has_params()) continue;
    const double var = policy.gain * 2.0 / static_cast<double>(spec.fan_in());
    std::normal_distribution<double> draw(0.0, std::sqrt(var));
    auto& p = ps.layers[i];
    p.w = GaussianVector<T>(spec.weight_count(), T(0), static_cast<T>(var));
    for (auto& m : p.w.mean) m = static_cast<T>(draw(rng));
    p.b = GaussianVector<T>(spec.bias_count(), T(0), static_cast<T>(var));
  }
  return ps;
}

}  // namespace tagi
