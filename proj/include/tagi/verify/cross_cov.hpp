#pragma once

// Joint-sampling oracle for the covariances between a layer (hidden states
// Z, through the linearized activation and the normalization) and the next
// layer's hidden states Z+ = W (A - mu_A) / sigma_A + B, with Z, W and B
// sampled independently.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tagi/layers.hpp"
#include "tagi/verify/sampling.hpp"

namespace tagi::verify {

/// Mean and standard error of (x - mx)(y - my) with exact means mx, my.
class CovStat {
 public:
  void add(double p) {
    s1_ += p;
    s2_ += p * p;
    ++n_;
  }
  double cov() const { return s1_ / n(); }
  double se() const { return std::sqrt(std::max(0.0, s2_ / n() - cov() * cov()) / n()); }

 private:
  double n() const { return static_cast<double>(n_); }
  double s1_ = 0, s2_ = 0;
  std::size_t n_ = 0;
};

struct CrossCovCase {
  std::size_t n_in = 0, n_out = 0;
  Activation act;
  bool normalized = false;
};

/// One random dense instance checked against cross_cov_normalized.
inline void check_cross_cov_case(CheckOutcome& r, const SuiteOptions& o, detail::Draw& d, const CrossCovCase& cc,
                                 const std::string& tag) {
  const std::size_t n = cc.n_in, m = cc.n_out;
  detail::GaussianSet z, w, b;
  z.random(d, n, 2.0, 0.05, 1.5);
  w.random(d, n * m, 1.5, 0.05, 1.0);
  b.random(d, m, 1.0, 0.05, 0.5);

  // Activation moments and the fixed normalization constants.
  std::vector<double> f(n), j(n), am(n), av(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = ref::activation(cc.act.kind, cc.act.slope, z.mean[i]);
    j[i] = ref::slope(cc.act.kind, cc.act.slope, z.mean[i]);
    am[i] = f[i];
    av[i] = j[i] * j[i] * z.var[i];
  }
  double mu_a = 0, sigma_a = 1;
  if (cc.normalized) {
    std::tie(mu_a, sigma_a) = ref::mixture(am, av);
    // Same floor the forward layer applies to a degenerate mixture.
    sigma_a = std::max(sigma_a, LayerSpec{}.norm_eps);
  }

  LayerCache<double> cache;
  cache.z = BatchState<double>::from_rows({z.vec()});
  cache.a = BatchState<double>::from_rows({GaussianVector<double>(am, av)});
  cache.jacobian = j;
  if (cc.normalized) cache.norm_stats = {MixtureStats<double>{mu_a, sigma_a}};
  cache.fill();
  LayerSpec next;
  next.kind = LayerKind::FullyConnected;
  next.in_shape = {static_cast<int>(n), 1, 1};
  next.out_shape = {static_cast<int>(m), 1, 1};
  const auto cov = cross_cov_normalized(cache, next, LayerParams<double>{w.vec(), b.vec()});

  // Exact mean of each Z+ unit for centering.
  std::vector<double> zp_mean(m);
  for (std::size_t u = 0; u < m; ++u) {
    double acc = b.mean[u];
    for (std::size_t i = 0; i < n; ++i) acc += w.mean[u * n + i] * (am[i] - mu_a) / sigma_a;
    zp_mean[u] = acc;
  }
  std::vector<CovStat> s_z(n * m), s_w(n * m), s_b(m);
  std::vector<double> xz, xw, xb, zp(m);
  for (std::size_t s = 0; s < o.samples; ++s) {
    z.sample(d, xz);
    w.sample(d, xw);
    b.sample(d, xb);
    for (std::size_t u = 0; u < m; ++u) {
      double acc = xb[u];
      for (std::size_t i = 0; i < n; ++i) {
        const double a = f[i] + j[i] * (xz[i] - z.mean[i]);
        acc += xw[u * n + i] * (a - mu_a) / sigma_a;
      }
      zp[u] = acc - zp_mean[u];
    }
    for (std::size_t u = 0; u < m; ++u) {
      for (std::size_t i = 0; i < n; ++i) {
        s_z[u * n + i].add((xz[i] - z.mean[i]) * zp[u]);
        s_w[u * n + i].add((xw[u * n + i] - w.mean[u * n + i]) * zp[u]);
      }
      s_b[u].add((xb[u] - b.mean[u]) * zp[u]);
    }
  }
  // Every (source, destination) pair must be present exactly once for a
  // dense layer; compare each with its estimate.
  auto check = [&](const std::vector<CrossCovEntry<double>>& entries, std::vector<CovStat>& est,
                   std::size_t n_src, bool per_dst, const char* what) {
    std::vector<double> analytic(est.size(), 0.0);
    std::vector<int> seen(est.size(), 0);
    for (const auto& e : entries) {
      const std::size_t src = e.src % n_src;  // weight index u*n+i maps to slot i
      const std::size_t key = per_dst ? e.dst : e.dst * n_src + src;
      analytic[key] += e.value;
      ++seen[key];
    }
    for (std::size_t k = 0; k < est.size(); ++k) {
      if (seen[k] != 1) {
        ++r.checks;
        ++r.failures;
        r.worst = tag + " " + what + " entry " + std::to_string(k) + " missing or duplicated";
        continue;
      }
      r.record(analytic[k], est[k].cov(), est[k].se(), o.k, tag + " " + what + " " + std::to_string(k));
    }
  };
  check(cov.dz_dzplus, s_z, n, false, "cov(Z,Z+)");
  check(cov.dw_dzplus, s_w, n, false, "cov(W,Z+)");
  check(cov.db_dzplus, s_b, m, true, "cov(B,Z+)");
  ++r.cases;
}

/// `cases` normalized instances plus `cases` un-normalized ones
/// (mu_A = 0, sigma_A = 1).
inline CheckOutcome check_cross_cov(const SuiteOptions& o) {
  CheckOutcome r{"cross_cov_normalized"};
  detail::Draw d(o.seed + 11);
  for (std::size_t c = 0; c < 2 * o.cases; ++c) {
    CrossCovCase cc;
    cc.n_in = static_cast<std::size_t>(d.integer(1, 4));
    cc.n_out = static_cast<std::size_t>(d.integer(1, 3));
    cc.act = detail::random_activation(d);
    cc.normalized = c % 2 == 0;
    check_cross_cov_case(r, o, d, cc,
                         "case " + std::to_string(c) + (cc.normalized ? " normalized " : " plain ") + to_string(cc.act));
  }
  return r;
}

}  // namespace tagi::verify
