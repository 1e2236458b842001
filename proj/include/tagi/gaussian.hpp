#pragma once

// Scalar and vector Gaussian moment arithmetic shared by every layer.
// Covariances are diagonal throughout: a vector of Gaussians is a mean
// vector plus a per-element variance vector.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tagi/error.hpp"

namespace tagi {

template <typename T>
struct GaussianScalar {
  T mean{0};
  T var{0};
};

template <typename T>
struct GaussianVector {
  std::vector<T> mean;
  std::vector<T> var;

  GaussianVector() = default;
  explicit GaussianVector(std::size_t n, T m = T(0), T v = T(0)) : mean(n, m), var(n, v) {}
  GaussianVector(std::vector<T> m, std::vector<T> v) : mean(std::move(m)), var(std::move(v)) {
    if (mean.size() != var.size())
      throw PreconditionError("GaussianVector: mean and variance lengths differ");
  }

  std::size_t size() const { return mean.size(); }
  bool empty() const { return mean.empty(); }
  GaussianScalar<T> operator[](std::size_t i) const { return {mean[i], var[i]}; }
  void set(std::size_t i, GaussianScalar<T> g) {
    mean[i] = g.mean;
    var[i] = g.var;
  }
};

template <typename T>
struct MixtureStats {
  T mu{0};
  T sigma{1};
};

enum class ActivationKind { Identity, ReLU, LeakyReLU, Tanh, Sigmoid };

struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  double slope = 0.2;  // only read for LeakyReLU

  static Activation identity() { return {}; }
  static Activation relu() { return {ActivationKind::ReLU, 0.0}; }
  static Activation leaky_relu(double s = 0.2) { return {ActivationKind::LeakyReLU, s}; }
  static Activation tanh() { return {ActivationKind::Tanh, 0.0}; }
  static Activation sigmoid() { return {ActivationKind::Sigmoid, 0.0}; }

  friend bool operator==(const Activation& a, const Activation& b) {
    if (a.kind != b.kind) return false;
    return a.kind != ActivationKind::LeakyReLU || a.slope == b.slope;
  }
};

inline Activation parse_activation(std::string_view s) {
  if (s == "-" || s == "identity" || s == "none") return Activation::identity();
  if (s == "relu" || s == "ReLU") return Activation::relu();
  if (s == "lrelu" || s == "lReLU" || s == "leaky_relu") return Activation::leaky_relu(0.2);
  if (s == "tanh" || s == "Tanh") return Activation::tanh();
  if (s == "sigmoid" || s == "Sigmoid") return Activation::sigmoid();
  throw ConfigError("unknown activation kind '" + std::string(s) + "'");
}

inline std::string to_string(const Activation& a) {
  switch (a.kind) {
    case ActivationKind::Identity: return "-";
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::LeakyReLU: return "lrelu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

template <typename T>
struct ActivationLinearization {
  std::vector<T> out_mean;
  std::vector<T> out_var;
  std::vector<T> jacobian;
};

namespace detail {

template <typename T>
bool finite(T x) {
  return std::isfinite(x);
}

// Value and slope of the activation at a point.
template <typename T>
inline void activate(const Activation& act, T z, T& value, T& slope) {
  switch (act.kind) {
    case ActivationKind::Identity:
      value = z;
      slope = T(1);
      return;
    case ActivationKind::ReLU:
      value = z > T(0) ? z : T(0);
      slope = z > T(0) ? T(1) : T(0);
      return;
    case ActivationKind::LeakyReLU: {
      const T a = static_cast<T>(act.slope);
      value = z > T(0) ? z : a * z;
      slope = z > T(0) ? T(1) : a;
      return;
    }
    case ActivationKind::Tanh: {
      const T t = std::tanh(z);
      value = t;
      slope = T(1) - t * t;
      return;
    }
    case ActivationKind::Sigmoid: {
      const T s = T(1) / (T(1) + std::exp(-z));
      value = s;
      slope = s * (T(1) - s);
      return;
    }
  }
  throw ConfigError("unknown activation kind");
}

}  // namespace detail

/// Moments of X*Y for independent Gaussians X and Y.
template <typename T>
GaussianScalar<T> gaussian_product_moments(GaussianScalar<T> x, GaussianScalar<T> y) {
  if (!detail::finite(x.mean) || !detail::finite(x.var) || !detail::finite(y.mean) ||
      !detail::finite(y.var))
    throw PreconditionError("gaussian_product_moments: non-finite input");
  return {x.mean * y.mean,
          x.var * y.var + x.var * y.mean * y.mean + x.mean * x.mean * y.var};
}

/// First-order expansion of the activation at the input mean. Output
/// variance is J^2 * var_z and J is returned for the backward sweep.
template <typename T>
ActivationLinearization<T> linearize_activation(const GaussianVector<T>& z, const Activation& act) {
  ActivationLinearization<T> out;
  const std::size_t n = z.size();
  out.out_mean.resize(n);
  out.out_var.resize(n);
  out.jacobian.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v, j;
    detail::activate(act, z.mean[i], v, j);
    out.out_mean[i] = v;
    out.jacobian[i] = j;
    out.out_var[i] = j * j * z.var[i];
  }
  return out;
}

/// Collapse equally weighted Gaussian components into one Gaussian with the
/// same first two moments.
template <typename T>
MixtureStats<T> mixture_reduce(std::span<const T> means, std::span<const T> vars) {
  if (means.empty()) throw PreconditionError("mixture_reduce: empty input");
  if (means.size() != vars.size()) throw PreconditionError("mixture_reduce: length mismatch");
  const std::size_t n = means.size();
  T mu = 0;
  for (T m : means) mu += m;
  mu /= static_cast<T>(n);
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = means[i] - mu;
    acc += vars[i] + d * d;
  }
  return {mu, std::sqrt(acc / static_cast<T>(n))};
}

template <typename T>
MixtureStats<T> mixture_reduce(const GaussianVector<T>& units) {
  return mixture_reduce<T>(std::span<const T>(units.mean), std::span<const T>(units.var));
}

template <typename T>
GaussianScalar<T> linear_combination_moments(std::span<const T> coeffs, const GaussianVector<T>& units,
                                             GaussianScalar<T> bias) {
  if (coeffs.size() != units.size())
    throw PreconditionError("linear_combination_moments: length mismatch");
  GaussianScalar<T> out = bias;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    out.mean += coeffs[i] * units.mean[i];
    out.var += coeffs[i] * coeffs[i] * units.var[i];
  }
  return out;
}

}  // namespace tagi
