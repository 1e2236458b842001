#pragma once

// Monte-Carlo oracles for the forward moment rules. Each check draws
// independent samples of every Gaussian input, pushes them through a direct
// (loop-based) evaluation of the operation and compares the empirical mean
// and variance of every output with the analytic moments, in units of the
// estimator's standard error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tagi/gaussian.hpp"
#include "tagi/layers.hpp"

namespace tagi::verify {

/// Running sums of (x - shift)^k, k = 1..4. The shift is the analytic mean,
/// which keeps the sums well conditioned.
class MomentStat {
 public:
  explicit MomentStat(double shift = 0) : shift_(shift) {}
  void add(double x) {
    const double y = x - shift_;
    const double y2 = y * y;
    s1_ += y;
    s2_ += y2;
    s3_ += y2 * y;
    s4_ += y2 * y2;
    ++n_;
  }
  std::size_t count() const { return n_; }
  double mean() const { return shift_ + s1_ / n(); }
  double var() const {
    const double m = s1_ / n();
    return std::max(0.0, (s2_ / n() - m * m) * n() / (n() - 1));
  }
  double central4() const {
    const double m = s1_ / n(), e2 = s2_ / n(), e3 = s3_ / n(), e4 = s4_ / n();
    return e4 - 4 * m * e3 + 6 * m * m * e2 - 3 * m * m * m * m;
  }
  double se_mean() const { return std::sqrt(var() / n()); }
  double se_var() const {
    const double v = var();
    return std::sqrt(std::max(0.0, central4() - v * v) / n());
  }

 private:
  double n() const { return static_cast<double>(n_); }
  double shift_;
  double s1_ = 0, s2_ = 0, s3_ = 0, s4_ = 0;
  std::size_t n_ = 0;
};

struct CheckOutcome {
  std::string op;
  std::size_t cases = 0;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double worst_z = 0;
  std::string worst;  // description of the worst check

  bool passed() const { return failures == 0 && checks > 0; }
  /// Records |analytic - estimate| / se against the k-sigma bound. A zero
  /// standard error (degenerate output) demands agreement to rounding.
  void record(double analytic, double estimate, double se, double k, const std::string& what) {
    ++checks;
    const double diff = std::abs(analytic - estimate);
    const double floor = 1e-12 * (1.0 + std::abs(analytic));
    double z = se > 0 ? diff / se : std::numeric_limits<double>::infinity();
    if (diff <= floor) z = 0;
    if (!(z <= k)) ++failures;
    if (z > worst_z || (checks == 1 && worst.empty())) {
      worst_z = z;
      std::ostringstream os;
      os << what << " analytic=" << analytic << " estimate=" << estimate << " se=" << se;
      worst = os.str();
    }
  }
  std::string summary() const {
    std::ostringstream os;
    os << op << ": " << cases << " cases, " << checks << " checks, " << failures << " beyond bound, worst z=" << worst_z;
    return os.str();
  }
};

struct SuiteOptions {
  std::size_t samples = 1'000'000;
  std::size_t cases = 100;
  double k = 4.0;  // bound in standard errors
  std::uint64_t seed = 20210213;
};

// ---------------------------------------------------------------------------
// Direct reference evaluations, written independently of the library kernels.

namespace ref {

inline double activation(ActivationKind kind, double slope, double z) {
  switch (kind) {
    case ActivationKind::Identity: return z;
    case ActivationKind::ReLU: return std::max(z, 0.0);
    case ActivationKind::LeakyReLU: return z >= 0 ? z : slope * z;
    case ActivationKind::Tanh: return std::tanh(z);
    case ActivationKind::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

/// Central difference slope.
inline double slope(ActivationKind kind, double leak, double z) {
  const double h = 1e-6 * std::max(1.0, std::abs(z));
  return (activation(kind, leak, z + h) - activation(kind, leak, z - h)) / (2 * h);
}

/// Pooled mean and standard deviation of equally weighted components.
inline std::pair<double, double> mixture(const std::vector<double>& m, const std::vector<double>& v) {
  const double n = static_cast<double>(m.size());
  double mu = 0;
  for (double x : m) mu += x / n;
  double second = 0;
  for (std::size_t i = 0; i < m.size(); ++i) second += (v[i] + m[i] * m[i]) / n;
  return {mu, std::sqrt(std::max(0.0, second - mu * mu))};
}

/// out[co][oy][ox] = b[co] + sum in[ci][oy*s-p+ky][ox*s-p+kx] * w[co][ci][ky][kx]
inline void conv2d(const Shape& in, const Shape& out, int k, int p, int s, const double* x, const double* w,
                   const double* b, double* y) {
  for (int co = 0; co < out.depth; ++co)
    for (int oy = 0; oy < out.height; ++oy)
      for (int ox = 0; ox < out.width; ++ox) {
        double acc = b[co];
        for (int ci = 0; ci < in.depth; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * s - p + ky, ix = ox * s - p + kx;
              if (iy < 0 || ix < 0 || iy >= in.height || ix >= in.width) continue;
              acc += x[(ci * in.height + iy) * in.width + ix] * w[((co * in.depth + ci) * k + ky) * k + kx];
            }
        y[(co * out.height + oy) * out.width + ox] = acc;
      }
}

/// Scatter form: every input pixel adds in * w[co][ci][ky][kx] to output
/// (iy*s-p+ky, ix*s-p+kx) when that lands inside the output grid.
inline void tconv2d(const Shape& in, const Shape& out, int k, int p, int s, const double* x, const double* w,
                    const double* b, double* y) {
  for (int co = 0; co < out.depth; ++co)
    for (std::size_t i = 0; i < out.plane(); ++i) y[co * out.plane() + i] = b[co];
  for (int ci = 0; ci < in.depth; ++ci)
    for (int iy = 0; iy < in.height; ++iy)
      for (int ix = 0; ix < in.width; ++ix) {
        const double v = x[(ci * in.height + iy) * in.width + ix];
        for (int co = 0; co < out.depth; ++co)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int oy = iy * s - p + ky, ox = ix * s - p + kx;
              if (oy < 0 || ox < 0 || oy >= out.height || ox >= out.width) continue;
              y[(co * out.height + oy) * out.width + ox] += v * w[((co * in.depth + ci) * k + ky) * k + kx];
            }
      }
}

/// Window sum divided by the full window size k*k (padding taps add zero).
inline void avg_pool(const Shape& in, const Shape& out, int k, int p, int s, const double* x, double* y) {
  for (int c = 0; c < in.depth; ++c)
    for (int oy = 0; oy < out.height; ++oy)
      for (int ox = 0; ox < out.width; ++ox) {
        double acc = 0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * s - p + ky, ix = ox * s - p + kx;
            if (iy < 0 || ix < 0 || iy >= in.height || ix >= in.width) continue;
            acc += x[(c * in.height + iy) * in.width + ix];
          }
        y[(c * out.height + oy) * out.width + ox] = acc / (k * k);
      }
}

}  // namespace ref

// ---------------------------------------------------------------------------

namespace detail {

struct Draw {
  std::mt19937_64 rng;
  std::normal_distribution<double> n01{0.0, 1.0};
  explicit Draw(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double normal() { return n01(rng); }
};

struct GaussianSet {
  std::vector<double> mean, var;
  void random(Draw& d, std::size_t n, double m_abs, double v_lo, double v_hi) {
    mean.resize(n);
    var.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      mean[i] = d.uniform(-m_abs, m_abs);
      var[i] = d.uniform(v_lo, v_hi);
    }
  }
  void sample(Draw& d, std::vector<double>& out) const {
    out.resize(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i) out[i] = mean[i] + std::sqrt(var[i]) * d.normal();
  }
  GaussianVector<double> vec() const { return GaussianVector<double>(mean, var); }
};

/// Draws `samples` outputs with `eval` and records mean and variance checks
/// for every output unit against the analytic moments.
inline void compare(CheckOutcome& out, const SuiteOptions& o, const std::vector<double>& am,
                    const std::vector<double>& av, const std::function<void(std::vector<double>&)>& eval,
                    const std::string& tag) {
  std::vector<MomentStat> st;
  for (double m : am) st.emplace_back(m);
  std::vector<double> y(am.size());
  for (std::size_t s = 0; s < o.samples; ++s) {
    eval(y);
    for (std::size_t i = 0; i < y.size(); ++i) st[i].add(y[i]);
  }
  for (std::size_t i = 0; i < am.size(); ++i) {
    out.record(am[i], st[i].mean(), st[i].se_mean(), o.k, tag + " unit " + std::to_string(i) + " mean");
    out.record(av[i], st[i].var(), st[i].se_var(), o.k, tag + " unit " + std::to_string(i) + " var");
  }
  ++out.cases;
}

inline Activation random_activation(Draw& d) {
  switch (d.integer(0, 4)) {
    case 0: return Activation::identity();
    case 1: return Activation::relu();
    case 2: return Activation::leaky_relu(0.2);
    case 3: return Activation::tanh();
    default: return Activation::sigmoid();
  }
}

}  // namespace detail

inline CheckOutcome check_product(const SuiteOptions& o) {
  CheckOutcome r{"gaussian_product_moments"};
  detail::Draw d(o.seed + 1);
  for (std::size_t c = 0; c < o.cases; ++c) {
    detail::GaussianSet g;
    g.random(d, 2, 3.0, 0.01, 3.0);
    const auto p = gaussian_product_moments<double>({g.mean[0], g.var[0]}, {g.mean[1], g.var[1]});
    std::vector<double> x;
    detail::compare(r, o, {p.mean}, {p.var}, [&](std::vector<double>& y) {
      g.sample(d, x);
      y[0] = x[0] * x[1];
    }, "case " + std::to_string(c));
  }
  return r;
}

inline CheckOutcome check_linear_combination(const SuiteOptions& o) {
  CheckOutcome r{"linear_combination_moments"};
  detail::Draw d(o.seed + 2);
  for (std::size_t c = 0; c < o.cases; ++c) {
    const std::size_t n = static_cast<std::size_t>(d.integer(1, 4));
    detail::GaussianSet g, bias;
    g.random(d, n, 2.0, 0.01, 2.0);
    bias.random(d, 1, 1.0, 0.0, 1.0);
    std::vector<double> coeff(n);
    for (auto& a : coeff) a = d.uniform(-2.0, 2.0);
    const auto lc = linear_combination_moments<double>(coeff, g.vec(), {bias.mean[0], bias.var[0]});
    std::vector<double> x, b;
    detail::compare(r, o, {lc.mean}, {lc.var}, [&](std::vector<double>& y) {
      g.sample(d, x);
      bias.sample(d, b);
      double acc = b[0];
      for (std::size_t i = 0; i < n; ++i) acc += coeff[i] * x[i];
      y[0] = acc;
    }, "case " + std::to_string(c));
  }
  return r;
}

/// The locally linearized activation a = f(mu) + f'(mu) (z - mu).
inline CheckOutcome check_activation(const SuiteOptions& o) {
  CheckOutcome r{"linearize_activation"};
  detail::Draw d(o.seed + 3);
  const Activation kinds[] = {Activation::identity(), Activation::relu(), Activation::leaky_relu(0.2),
                              Activation::tanh(), Activation::sigmoid()};
  for (std::size_t c = 0; c < o.cases * 5; ++c) {
    const Activation act = kinds[c % 5];
    detail::GaussianSet g;
    g.random(d, 2, 3.0, 0.01, 2.0);
    const auto lin = linearize_activation(g.vec(), act);
    std::vector<double> f(2), j(2), x;
    for (int i = 0; i < 2; ++i) {
      f[i] = ref::activation(act.kind, act.slope, g.mean[i]);
      j[i] = ref::slope(act.kind, act.slope, g.mean[i]);
    }
    detail::compare(r, o, lin.out_mean, lin.out_var, [&](std::vector<double>& y) {
      g.sample(d, x);
      for (int i = 0; i < 2; ++i) y[i] = f[i] + j[i] * (x[i] - g.mean[i]);
    }, "case " + std::to_string(c) + " " + to_string(act));
  }
  return r;
}

/// Pooled samples drawn from a uniformly chosen component.
inline CheckOutcome check_mixture(const SuiteOptions& o) {
  CheckOutcome r{"mixture_reduce"};
  detail::Draw d(o.seed + 4);
  for (std::size_t c = 0; c < o.cases; ++c) {
    const int n = d.integer(1, 6);
    detail::GaussianSet g;
    g.random(d, static_cast<std::size_t>(n), 3.0, 0.0, 2.0);
    const auto st = mixture_reduce(g.vec());
    std::uniform_int_distribution<int> pick(0, n - 1);
    detail::compare(r, o, {st.mu}, {st.sigma * st.sigma}, [&](std::vector<double>& y) {
      const int k = pick(d.rng);
      y[0] = g.mean[k] + std::sqrt(g.var[k]) * d.normal();
    }, "case " + std::to_string(c));
  }
  return r;
}

inline CheckOutcome check_fc(const SuiteOptions& o) {
  CheckOutcome r{"fc_forward"};
  detail::Draw d(o.seed + 5);
  for (std::size_t c = 0; c < o.cases; ++c) {
    const std::size_t ni = static_cast<std::size_t>(d.integer(1, 3)), no = static_cast<std::size_t>(d.integer(1, 2));
    detail::GaussianSet a, w, b;
    a.random(d, ni, 2.0, 0.0, 1.5);
    w.random(d, ni * no, 1.5, 0.01, 1.0);
    b.random(d, no, 1.0, 0.0, 0.5);
    const auto z = fc_forward<double>(a.vec(), w.vec(), b.vec());
    std::vector<double> xa, xw, xb;
    detail::compare(r, o, z.mean, z.var, [&](std::vector<double>& y) {
      a.sample(d, xa);
      w.sample(d, xw);
      b.sample(d, xb);
      for (std::size_t u = 0; u < no; ++u) {
        double acc = xb[u];
        for (std::size_t i = 0; i < ni; ++i) acc += xw[u * ni + i] * xa[i];
        y[u] = acc;
      }
    }, "case " + std::to_string(c));
  }
  return r;
}

namespace detail {

inline LayerSpec random_spatial(Draw& d, LayerKind kind) {
  LayerSpec s;
  s.kind = kind;
  for (;;) {
    const int k = d.integer(1, 3), p = d.integer(0, k / 2 + (kind == LayerKind::AvgPool ? 0 : 1)), st = d.integer(1, 2);
    const int cin = kind == LayerKind::AvgPool ? d.integer(1, 2) : 1;
    const int cout = kind == LayerKind::AvgPool ? cin : d.integer(1, 2);
    const int w = d.integer(2, 4), h = d.integer(2, 4);
    s.kernel = k;
    s.padding = p;
    s.stride = st;
    s.in_shape = {cin, w, h};
    s.out_shape = {cout, 1, 1};
    if (kind == LayerKind::TransposedConv2d) {
      if (p >= k) continue;
      s.out_shape = {cout, tconv_out_extent(w, k, p, st), tconv_out_extent(h, k, p, st)};
    } else {
      const int ow = conv_out_extent(w, k, p, st), oh = conv_out_extent(h, k, p, st);
      if (w + 2 * p < k || h + 2 * p < k || ow <= 0 || oh <= 0) continue;
      s.out_shape = {cout, ow, oh};
    }
    if (s.out_shape.size() <= 12 && s.out_shape.width > 0 && s.out_shape.height > 0) return s;
  }
}

inline std::string describe(const LayerSpec& s) {
  return to_string(s.in_shape) + "->" + to_string(s.out_shape) + " K" + std::to_string(s.kernel) + " P" +
         std::to_string(s.padding) + " S" + std::to_string(s.stride);
}

}  // namespace detail

inline CheckOutcome check_conv(const SuiteOptions& o, bool transposed) {
  CheckOutcome r{transposed ? "transposed_conv_forward" : "conv_forward"};
  detail::Draw d(o.seed + (transposed ? 7 : 6));
  for (std::size_t c = 0; c < o.cases; ++c) {
    const LayerSpec s = detail::random_spatial(d, transposed ? LayerKind::TransposedConv2d : LayerKind::Conv2d);
    const std::size_t nw = static_cast<std::size_t>(s.out_shape.depth) * s.in_shape.depth * s.kernel * s.kernel;
    detail::GaussianSet a, w, b;
    a.random(d, s.in_shape.size(), 2.0, 0.0, 1.0);
    w.random(d, nw, 1.0, 0.01, 0.5);
    b.random(d, static_cast<std::size_t>(s.out_shape.depth), 1.0, 0.0, 0.5);
    const auto z = transposed ? transposed_conv_forward<double>(a.vec(), w.vec(), b.vec(), s)
                              : conv_forward<double>(a.vec(), w.vec(), b.vec(), s);
    std::vector<double> xa, xw, xb;
    detail::compare(r, o, z.mean, z.var, [&](std::vector<double>& y) {
      a.sample(d, xa);
      w.sample(d, xw);
      b.sample(d, xb);
      if (transposed)
        ref::tconv2d(s.in_shape, s.out_shape, s.kernel, s.padding, s.stride, xa.data(), xw.data(), xb.data(), y.data());
      else
        ref::conv2d(s.in_shape, s.out_shape, s.kernel, s.padding, s.stride, xa.data(), xw.data(), xb.data(), y.data());
    }, "case " + std::to_string(c) + " " + detail::describe(s));
  }
  return r;
}

inline CheckOutcome check_pool(const SuiteOptions& o) {
  CheckOutcome r{"avg_pool_forward"};
  detail::Draw d(o.seed + 8);
  for (std::size_t c = 0; c < o.cases; ++c) {
    const LayerSpec s = detail::random_spatial(d, LayerKind::AvgPool);
    detail::GaussianSet a;
    a.random(d, s.in_shape.size(), 2.0, 0.0, 1.5);
    const auto z = avg_pool_forward<double>(a.vec(), s);
    std::vector<double> xa;
    detail::compare(r, o, z.mean, z.var, [&](std::vector<double>& y) {
      a.sample(d, xa);
      ref::avg_pool(s.in_shape, s.out_shape, s.kernel, s.padding, s.stride, xa.data(), y.data());
    }, "case " + std::to_string(c) + " " + detail::describe(s));
  }
  return r;
}

/// Normalization with the mixture statistics held fixed: each sample of
/// the layer is mapped through (a - mu_A) / sigma_A.
inline CheckOutcome check_layer_norm(const SuiteOptions& o) {
  CheckOutcome r{"layer_norm_forward"};
  detail::Draw d(o.seed + 9);
  for (std::size_t c = 0; c < o.cases; ++c) {
    const std::size_t n = static_cast<std::size_t>(d.integer(2, 6));
    detail::GaussianSet a;
    a.random(d, n, 3.0, 0.0, 2.0);
    const auto [out, st] = layer_norm_forward<double>(a.vec());
    const auto [mu, sigma] = ref::mixture(a.mean, a.var);
    std::vector<double> xa;
    detail::compare(r, o, out.mean, out.var, [&](std::vector<double>& y) {
      a.sample(d, xa);
      for (std::size_t i = 0; i < n; ++i) y[i] = (xa[i] - mu) / sigma;
    }, "case " + std::to_string(c));
  }
  return r;
}

inline CheckOutcome check_batch_norm(const SuiteOptions& o) {
  CheckOutcome r{"batch_norm_forward"};
  detail::Draw d(o.seed + 10);
  for (std::size_t c = 0; c < o.cases; ++c) {
    const std::size_t B = static_cast<std::size_t>(d.integer(2, 4)), n = static_cast<std::size_t>(d.integer(1, 3));
    std::vector<detail::GaussianSet> rows(B);
    std::vector<GaussianVector<double>> batch;
    for (auto& g : rows) {
      g.random(d, n, 3.0, 0.0, 2.0);
      batch.push_back(g.vec());
    }
    const auto [out, stats] = batch_norm_forward<double>(batch);
    std::vector<double> am, av, mu(n), sigma(n);
    for (const auto& row : out) {
      am.insert(am.end(), row.mean.begin(), row.mean.end());
      av.insert(av.end(), row.var.begin(), row.var.end());
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> m(B), v(B);
      for (std::size_t b = 0; b < B; ++b) {
        m[b] = rows[b].mean[i];
        v[b] = rows[b].var[i];
      }
      std::tie(mu[i], sigma[i]) = ref::mixture(m, v);
    }
    std::vector<double> x;
    detail::compare(r, o, am, av, [&](std::vector<double>& y) {
      for (std::size_t b = 0; b < B; ++b) {
        rows[b].sample(d, x);
        for (std::size_t i = 0; i < n; ++i) y[b * n + i] = (x[i] - mu[i]) / sigma[i];
      }
    }, "case " + std::to_string(c));
  }
  return r;
}

/// Every forward moment rule, one outcome per operation.
inline std::vector<CheckOutcome> run_moment_suite(const SuiteOptions& o,
                                                  const std::function<void(const CheckOutcome&)>& progress = {}) {
  std::vector<CheckOutcome> all;
  auto run = [&](CheckOutcome c) {
    if (progress) progress(c);
    all.push_back(std::move(c));
  };
  run(check_product(o));
  run(check_linear_combination(o));
  run(check_activation(o));
  run(check_mixture(o));
  run(check_fc(o));
  run(check_conv(o, false));
  run(check_conv(o, true));
  run(check_pool(o));
  run(check_layer_norm(o));
  run(check_batch_norm(o));
  return all;
}

}  // namespace tagi::verify
