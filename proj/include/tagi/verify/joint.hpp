#pragma once

// Full joint-Gaussian conditioning oracle for small dense networks with a
// deterministic input. The joint over all parameters and hidden states is
// assembled explicitly: parameters are mutually independent, hidden units
// within a layer are uncorrelated, each layer's covariance with the next
// comes from the same local linearization the forward pass uses, and
// covariances across more than one layer are composed through the
// intermediate layer (cov(v, z+) = sum_j cov(v, z_j) cov(z_j, z+) / var(z_j)).
// Conditioning on y = z_out + v is then a single dense Gaussian update.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tagi/gaussian.hpp"
#include "tagi/inference.hpp"
#include "tagi/verify/sampling.hpp"

namespace tagi::verify {

struct DenseNetSpec {
  std::vector<std::size_t> widths;  // input width first
  std::vector<Activation> acts;     // one per layer after the input
};

struct DenseParams {
  // Per layer l (1-based in widths): W row-major [out][in], then b.
  std::vector<std::vector<double>> wm, wv, bm, bv;
};

struct JointPosterior {
  DenseParams prior, posterior;  // parameter moments before / after conditioning
  std::vector<double> out_prior_mean, out_prior_var, out_post_mean, out_post_var;
  std::size_t variables = 0;  // parameters + hidden states
};

/// Number of random variables in the joint: all parameters and every
/// hidden state (the input is deterministic).
inline std::size_t joint_size(const DenseNetSpec& s) {
  std::size_t n = 0;
  for (std::size_t l = 1; l < s.widths.size(); ++l) n += s.widths[l] * s.widths[l - 1] + 2 * s.widths[l];
  return n;
}

inline JointPosterior condition_joint(const DenseNetSpec& s, const DenseParams& p, const std::vector<double>& x,
                                      const std::vector<double>& y, double sigma_v) {
  const std::size_t L = s.widths.size() - 1;
  // Variable layout per layer: W (out*in), b (out), z (out).
  std::vector<std::size_t> w_off(L + 1), b_off(L + 1), z_off(L + 1);
  std::size_t N = 0;
  for (std::size_t l = 1; l <= L; ++l) {
    w_off[l] = N;
    N += s.widths[l] * s.widths[l - 1];
    b_off[l] = N;
    N += s.widths[l];
    z_off[l] = N;
    N += s.widths[l];
  }
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(mu.size(), mu.size());

  std::vector<double> a_mean = x, a_var(x.size(), 0.0);
  std::vector<std::vector<double>> zm(L + 1), zv(L + 1), jac(L + 1);
  for (std::size_t l = 1; l <= L; ++l) {
    const std::size_t ni = s.widths[l - 1], no = s.widths[l];
    const auto& wm = p.wm[l - 1];
    const auto& wv = p.wv[l - 1];
    zm[l].assign(no, 0.0);
    zv[l].assign(no, 0.0);
    jac[l].assign(no, 0.0);
    for (std::size_t k = 0; k < ni * no; ++k) {
      mu(static_cast<Eigen::Index>(w_off[l] + k)) = wm[k];
      S(static_cast<Eigen::Index>(w_off[l] + k), static_cast<Eigen::Index>(w_off[l] + k)) = wv[k];
    }
    for (std::size_t u = 0; u < no; ++u) {
      const auto bi = static_cast<Eigen::Index>(b_off[l] + u);
      mu(bi) = p.bm[l - 1][u];
      S(bi, bi) = p.bv[l - 1][u];
      // Exact product moments of independent Gaussians.
      double m = p.bm[l - 1][u], v = p.bv[l - 1][u];
      for (std::size_t i = 0; i < ni; ++i) {
        const double w_m = wm[u * ni + i], w_v = wv[u * ni + i];
        m += w_m * a_mean[i];
        v += w_v * a_var[i] + w_v * a_mean[i] * a_mean[i] + w_m * w_m * a_var[i];
      }
      zm[l][u] = m;
      zv[l][u] = v;
      const auto zi = static_cast<Eigen::Index>(z_off[l] + u);
      mu(zi) = m;
      S(zi, zi) = v;
    }
    // Direct covariances of this layer's parameters and the previous
    // layer's hidden states with z_l.
    for (std::size_t u = 0; u < no; ++u) {
      const auto zi = static_cast<Eigen::Index>(z_off[l] + u);
      for (std::size_t i = 0; i < ni; ++i) {
        const auto wi = static_cast<Eigen::Index>(w_off[l] + u * ni + i);
        S(wi, zi) = S(zi, wi) = wv[u * ni + i] * a_mean[i];
      }
      const auto bi = static_cast<Eigen::Index>(b_off[l] + u);
      S(bi, zi) = S(zi, bi) = p.bv[l - 1][u];
    }
    if (l > 1) {
      // cov(z_{l-1,j}, z_{l,u}) = var(z_{l-1,j}) * J_j * E[W_uj], then every
      // earlier variable composes through z_{l-1}.
      std::vector<std::vector<double>> c(ni, std::vector<double>(no));
      for (std::size_t j = 0; j < ni; ++j)
        for (std::size_t u = 0; u < no; ++u) c[j][u] = zv[l - 1][j] * jac[l - 1][j] * wm[u * ni + j];
      for (std::size_t v = 0; v < z_off[l - 1] + ni; ++v) {
        if (v >= z_off[l - 1]) {
          const std::size_t j = v - z_off[l - 1];
          for (std::size_t u = 0; u < no; ++u) {
            const auto zi = static_cast<Eigen::Index>(z_off[l] + u), vi = static_cast<Eigen::Index>(v);
            S(vi, zi) = S(zi, vi) = c[j][u];
          }
          continue;
        }
        for (std::size_t u = 0; u < no; ++u) {
          double acc = 0;
          for (std::size_t j = 0; j < ni; ++j)
            acc += S(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(z_off[l - 1] + j)) * c[j][u] /
                   zv[l - 1][j];
          const auto zi = static_cast<Eigen::Index>(z_off[l] + u), vi = static_cast<Eigen::Index>(v);
          S(vi, zi) = S(zi, vi) = acc;
        }
      }
    }
    // Linearized activation moments feed the next layer.
    a_mean.assign(no, 0.0);
    a_var.assign(no, 0.0);
    for (std::size_t u = 0; u < no; ++u) {
      const double f = ref::activation(s.acts[l - 1].kind, s.acts[l - 1].slope, zm[l][u]);
      double j = 0;
      if (s.acts[l - 1].kind == ActivationKind::Identity) j = 1;
      else j = ref::slope(s.acts[l - 1].kind, s.acts[l - 1].slope, zm[l][u]);
      jac[l][u] = j;
      a_mean[u] = f;
      a_var[u] = j * j * zv[l][u];
    }
  }
  // Observation y = h(z_out) + v with the output activation linearized.
  const std::size_t no = s.widths[L];
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(no), mu.size());
  Eigen::VectorXd r(static_cast<Eigen::Index>(no));
  for (std::size_t u = 0; u < no; ++u) {
    H(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(z_off[L] + u)) = jac[L][u];
    r(static_cast<Eigen::Index>(u)) = y[u] - a_mean[u];
  }
  const Eigen::MatrixXd SH = S * H.transpose();
  Eigen::MatrixXd Sy = H * SH;
  Sy.diagonal().array() += sigma_v * sigma_v;
  const Eigen::MatrixXd K = SH * Sy.inverse();
  const Eigen::VectorXd mu_post = mu + K * r;
  const Eigen::MatrixXd S_post = S - K * SH.transpose();

  JointPosterior out;
  out.variables = N;
  out.prior = p;
  out.posterior = p;
  for (std::size_t l = 1; l <= L; ++l) {
    const std::size_t ni = s.widths[l - 1], nol = s.widths[l];
    for (std::size_t k = 0; k < ni * nol; ++k) {
      const auto i = static_cast<Eigen::Index>(w_off[l] + k);
      out.posterior.wm[l - 1][k] = mu_post(i);
      out.posterior.wv[l - 1][k] = S_post(i, i);
    }
    for (std::size_t u = 0; u < nol; ++u) {
      const auto i = static_cast<Eigen::Index>(b_off[l] + u);
      out.posterior.bm[l - 1][u] = mu_post(i);
      out.posterior.bv[l - 1][u] = S_post(i, i);
    }
  }
  for (std::size_t u = 0; u < no; ++u) {
    const auto i = static_cast<Eigen::Index>(z_off[L] + u);
    out.out_prior_mean.push_back(mu(i));
    out.out_prior_var.push_back(S(i, i));
    out.out_post_mean.push_back(mu_post(i));
    out.out_post_var.push_back(S_post(i, i));
  }
  return out;
}


/// Every dense architecture (input width first, at least one layer) whose
/// joint holds at most `max_vars` random variables.
inline std::vector<std::vector<std::size_t>> small_architectures(std::size_t max_vars) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::vector<std::size_t>> frontier;
  for (std::size_t n = 1; n <= max_vars; ++n) frontier.push_back({n});
  while (!frontier.empty()) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& w : frontier)
      for (std::size_t m = 1; m <= max_vars; ++m) {
        auto e = w;
        e.push_back(m);
        if (joint_size(DenseNetSpec{e, {}}) > max_vars) break;
        out.push_back(e);
        next.push_back(e);
      }
    frontier = std::move(next);
  }
  return out;
}

inline DenseParams random_dense_params(const DenseNetSpec& s, detail::Draw& d) {
  DenseParams p;
  for (std::size_t l = 1; l < s.widths.size(); ++l) {
    const std::size_t n = s.widths[l] * s.widths[l - 1], m = s.widths[l];
    std::vector<double> wm(n), wv(n), bm(m), bv(m);
    for (std::size_t k = 0; k < n; ++k) {
      wm[k] = d.uniform(-1.2, 1.2);
      wv[k] = d.uniform(0.05, 0.6);
    }
    for (std::size_t k = 0; k < m; ++k) {
      bm[k] = d.uniform(-0.5, 0.5);
      bv[k] = d.uniform(0.05, 0.3);
    }
    p.wm.push_back(wm);
    p.wv.push_back(wv);
    p.bm.push_back(bm);
    p.bv.push_back(bv);
  }
  return p;
}

/// Library network equivalent to a dense spec: hidden fc layers and a fully
/// connected output row.
inline NetworkConfig dense_config(const DenseNetSpec& s) {
  NetworkConfig cfg;
  cfg.name = "dense";
  cfg.input = {static_cast<int>(s.widths.front()), 1, 1};
  for (std::size_t l = 1; l < s.widths.size(); ++l) {
    LayerSpec spec;
    spec.kind = l + 1 == s.widths.size() ? LayerKind::Output : LayerKind::FullyConnected;
    spec.out_shape = {static_cast<int>(s.widths[l]), 1, 1};
    spec.activation = s.acts[l - 1];
    cfg.layers.push_back(spec);
  }
  resolve_shapes(cfg);
  return cfg;
}

inline ParameterStore<double> to_store(const DenseParams& p) {
  ParameterStore<double> ps;
  for (std::size_t l = 0; l < p.wm.size(); ++l)
    ps.layers.push_back({GaussianVector<double>(p.wm[l], p.wv[l]), GaussianVector<double>(p.bm[l], p.bv[l])});
  return ps;
}

/// The library's forward pass and layer-wise backward sweep for one
/// observation, reported in the same form as condition_joint.
inline JointPosterior condition_layerwise(const DenseNetSpec& s, const DenseParams& p, const std::vector<double>& x,
                                          const std::vector<double>& y, double sigma_v) {
  Network<double> net(dense_config(s));
  auto ps = to_store(p);
  BatchState<double> in(1, x.size());
  in.mean = x;
  net.forward(ps, in);
  const auto& last = net.cache(net.num_layers() - 1);
  const auto z = last.z.row(0);
  const auto jac = last.jacobian;
  const auto d = output_innovation(net.output(), std::span<const double>(y), sigma_v);
  const auto r = net.backward(ps, d, true, false);
  apply_deltas(ps, r.deltas, 0.0);

  JointPosterior out;
  out.variables = joint_size(s);
  out.prior = p;
  out.posterior = p;
  for (std::size_t l = 0; l < p.wm.size(); ++l) {
    out.posterior.wm[l] = ps.layers[l].w.mean;
    out.posterior.wv[l] = ps.layers[l].w.var;
    out.posterior.bm[l] = ps.layers[l].b.mean;
    out.posterior.bv[l] = ps.layers[l].b.var;
  }
  for (std::size_t u = 0; u < z.size(); ++u) {
    const double j = jac[u], v = z.var[u];
    out.out_prior_mean.push_back(z.mean[u]);
    out.out_prior_var.push_back(v);
    out.out_post_mean.push_back(z.mean[u] + v * j * d.dm[u]);
    out.out_post_var.push_back(v + v * v * j * j * d.dS[u]);
  }
  return out;
}

/// Largest absolute difference over posterior parameter and output moments.
struct JointGap {
  double mean = 0;
  double var = 0;
};

inline JointGap compare_posteriors(const JointPosterior& a, const JointPosterior& b) {
  JointGap g;
  auto upd = [](double& worst, const std::vector<double>& x, const std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  };
  for (std::size_t l = 0; l < a.posterior.wm.size(); ++l) {
    upd(g.mean, a.posterior.wm[l], b.posterior.wm[l]);
    upd(g.mean, a.posterior.bm[l], b.posterior.bm[l]);
    upd(g.var, a.posterior.wv[l], b.posterior.wv[l]);
    upd(g.var, a.posterior.bv[l], b.posterior.bv[l]);
  }
  upd(g.mean, a.out_post_mean, b.out_post_mean);
  upd(g.var, a.out_post_var, b.out_post_var);
  return g;
}

/// Random instances over every architecture with at most `max_vars`
/// variables; hidden and output activations are drawn at random.
inline CheckOutcome check_joint_conditioning(std::size_t max_vars, std::size_t per_arch, double tol,
                                             std::uint64_t seed) {
  CheckOutcome r{"joint_conditioning"};
  detail::Draw d(seed);
  for (const auto& widths : small_architectures(max_vars)) {
    for (std::size_t c = 0; c < per_arch; ++c) {
      DenseNetSpec s{widths, {}};
      for (std::size_t l = 1; l < widths.size(); ++l) s.acts.push_back(detail::random_activation(d));
      const auto p = random_dense_params(s, d);
      std::vector<double> x(widths.front()), y(widths.back());
      for (auto& v : x) v = d.uniform(-1.5, 1.5);
      for (auto& v : y) v = d.uniform(-2, 2);
      const double sv = d.uniform(0.3, 1.5);
      const auto g = compare_posteriors(condition_joint(s, p, x, y, sv), condition_layerwise(s, p, x, y, sv));
      std::string tag;
      for (auto w : widths) tag += (tag.empty() ? "" : "-") + std::to_string(w);
      r.checks += 2;
      ++r.cases;
      const double worst = std::max(g.mean, g.var);
      if (worst > tol) ++r.failures;
      if (worst >= r.worst_z) {
        r.worst_z = worst;
        r.worst = tag + " gap mean " + std::to_string(g.mean) + " var " + std::to_string(g.var);
      }
    }
  }
  return r;
}

}  // namespace tagi::verify
