// Acceptance run: one PASS / FAIL / BLOCKED line per criterion. BLOCKED
// means the criterion needs a dataset that was not provided; it does not
// fail the run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include "tagi/tagi.hpp"
#include "tagi/verify/cross_cov.hpp"
#include "tagi/verify/joint.hpp"
#include "tagi/verify/metrics_ref.hpp"
#include "tagi/verify/sampling.hpp"

using namespace tagi;

namespace {

enum class Status { Pass, Fail, Blocked };

int failures = 0;

void report(const char* name, Status s, const std::string& detail, double seconds) {
  const char* tag = s == Status::Pass ? "PASS" : s == Status::Fail ? "FAIL" : "BLOCKED";
  if (s == Status::Fail) ++failures;
  std::printf("%-7s %-28s %s (%.1f s)\n", tag, name, detail.c_str(), seconds);
  std::fflush(stdout);
}

void criterion(const char* name, const std::function<Status(std::string&)>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  Status s;
  try {
    s = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
    s = Status::Fail;
  }
  report(name, s, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

const std::string kMini = TAGI_TEST_DATA "/mnist-mini";

Status moment_suite(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  verify::SuiteOptions o;  // 10^6 samples, 100 cases, 4 standard errors
  std::size_t checks = 0, bad = 0;
  double worst = 0;
  std::string worst_op;
  for (const auto& c : verify::run_moment_suite(o)) {
    checks += c.checks;
    bad += c.failures;
    if (c.worst_z > worst) {
      worst = c.worst_z;
      worst_op = c.op;
    }
    if (!c.passed()) detail += c.op + " failed: " + c.worst + "; ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail += std::to_string(checks) + " checks, " + std::to_string(bad) + " beyond 4 SE, worst z " +
            fmt("%.2f", worst) + " (" + worst_op + ")";
  return bad == 0 && secs < 600 ? Status::Pass : Status::Fail;
}

Status cross_cov(std::string& detail) {
  verify::SuiteOptions o;
  o.cases = 50;  // 50 normalized + 50 with mu_A = 0, sigma_A = 1
  const auto c = verify::check_cross_cov(o);
  detail = std::to_string(c.cases) + " layers, " + std::to_string(c.checks) + " entries, worst z " +
           fmt("%.2f", c.worst_z);
  if (!c.passed()) detail += "; " + c.worst;
  return c.passed() && c.cases >= 50 ? Status::Pass : Status::Fail;
}

Status joint(std::string& detail) {
  const auto c = verify::check_joint_conditioning(12, 3, 1e-5, 97);
  detail = std::to_string(c.cases) + " nets (" + std::to_string(verify::small_architectures(12).size()) +
           " architectures), worst gap " + fmt("%.2e", c.worst_z) + " [" + c.worst + "]";
  return c.passed() ? Status::Pass : Status::Fail;
}

double epoch1_error(const std::string& preset_name, TrainTestSplit data) {
  auto b = build<float>(preset(preset_name), 0);
  TrainConfig tc;
  tc.epochs = 1;
  tc.sigma_v0 = 1.0;
  tc.eta = 0.975;
  tc.batch = 16;
  return train(b.net, b.params, data.train, data.test, tc).history.at(0).test.error_rate;
}

Status mnist(std::string& detail) {
  const char* root = std::getenv("TAGI_MNIST_ROOT");
  if (!root || !*root) {
    detail = "set TAGI_MNIST_ROOT to the 60000/10000 IDX files";
    return Status::Blocked;
  }
  const double err = epoch1_error("mnist-cnn", load_mnist({"mnist", root}));
  detail = fmt("epoch-1 test error %.2f%% (bound 2.5%%)", 100 * err);
  return err <= 0.025 ? Status::Pass : Status::Fail;
}

Status cifar(std::string& detail) {
  const char* root = std::getenv("TAGI_CIFAR_ROOT");
  if (!root || !*root) {
    detail = "set TAGI_CIFAR_ROOT to the CIFAR-10 binary batches";
    return Status::Blocked;
  }
  const double err = epoch1_error("cifar10-3conv", load_cifar10({"cifar10", root}));
  detail = fmt("epoch-1 test error %.2f%% (bound 50%%)", 100 * err);
  return err <= 0.5 ? Status::Pass : Status::Fail;
}

Status normalization(std::string& detail) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> var(0.01, 3.0);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t B = 2 + t % 15, n = 1 + t % 37;
    BatchState<double> x(B, n);
    for (std::size_t i = 0; i < x.mean.size(); ++i) {
      x.mean[i] = 3 * n01(rng) + 2;
      x.var[i] = var(rng);
    }
    LayerSpec ln, bn;
    ln.kind = LayerKind::LayerNorm;
    bn.kind = LayerKind::BatchNorm;
    ln.out_shape = bn.out_shape = Shape{static_cast<int>(n), 1, 1};
    LayerCache<double> cl, cb;
    layer_norm_forward_batch(ln, x, cl);
    batch_norm_forward_batch(bn, x, cb);
    if (n >= 2) {
      for (std::size_t b = 0; b < B; ++b) {
        const auto r = cl.a.row(b);
        const auto [mu, sd] = verify::ref::mixture(r.mean, r.var);
        worst = std::max({worst, std::abs(mu), std::abs(sd - 1)});
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> m, v;
      for (std::size_t b = 0; b < B; ++b) {
        m.push_back(cb.a.mean[b * n + i]);
        v.push_back(cb.a.var[b * n + i]);
      }
      const auto [mu, sd] = verify::ref::mixture(m, v);
      worst = std::max({worst, std::abs(mu), std::abs(sd - 1)});
    }
  }

  // Identity limit: 2 epochs on a fixed subset, plain vs each norm kind.
  auto data = load_mnist({"mnist", kMini, Preprocessing::UnitRangeMeanSubtract, false});
  data.train = take(data.train, 320);
  data.test = take(data.test, 100);
  auto run = [&](const NetworkConfig& cfg) {
    auto b = build<double>(cfg, 3);
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 3;
    return train(b.net, b.params, data.train, data.test, tc).history.back();
  };
  const auto plain = run(preset("mnist-cnn"));
  double gap = 0;
  for (auto k : {LayerKind::LayerNorm, LayerKind::BatchNorm}) {
    const auto e = run(with_normalization(preset("mnist-cnn"), k, true));
    gap = std::max({gap, std::abs(e.train_error - plain.train_error), std::abs(e.test.error_rate - plain.test.error_rate),
                    std::abs(e.test.nll - plain.test.nll), std::abs(e.test.ece - plain.test.ece),
                    std::abs(e.test.auroc - plain.test.auroc)});
  }
  detail = fmt("max |mixture stat - (0,1)| %.2e (bound 1e-5); identity-limit metric gap %.2e (bound 1e-9)", worst, gap);
  return worst <= 1e-5 && gap <= 1e-9 ? Status::Pass : Status::Fail;
}

Status decay(std::string& detail) {
  ObservationModel<double> obs{1.0, 0.975, 0};
  for (int e = 0; e < 50; ++e) obs = decay_noise(obs);
  // 0.975^50 evaluated exactly in rational arithmetic and rounded.
  const double expected = 0.281988102340917219967;
  const double err = std::abs(obs.sigma_v - expected);
  detail = fmt("sigma_V after 50 epochs %.15f, |error| %.1e (bound 1e-12)", obs.sigma_v, err);
  return err <= 1e-12 && obs.epoch == 50 ? Status::Pass : Status::Fail;
}

Status scaling(std::string& detail) {
  const auto r = bench_scaling<float>({64, 128, 256, 512});
  for (const auto& p : r.points) detail += std::to_string(p.params) + ":" + fmt("%.2fms", 1e3 * p.seconds) + " ";
  detail += fmt("R^2 %.4f (bound 0.95)", r.r2);
  return r.r2 > 0.95 ? Status::Pass : Status::Fail;
}

double toy_distance(GanBundle<double>& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto f = generate_moments(g, detail::sample_codes<double>(g.layout, 1000, rng));
  double d = 0;
  for (std::size_t i = 0; i < 1000; ++i) d += toy::two_moons_distance(f.mean[2 * i], f.mean[2 * i + 1]);
  return d / 1000;
}

bool all_finite(const GanBundle<double>& g) {
  for (const auto* net : {&g.gnet, &g.dnet, &g.pnet})
    for (const auto& l : net->params.layers)
      for (const auto* v : {&l.w.mean, &l.w.var, &l.b.mean, &l.b.var})
        for (double x : *v)
          if (!std::isfinite(x)) return false;
  return true;
}

Status gan(std::string& detail) {
  GanSettings s;
  s.seed = 1;
  auto g = make_toy_gan<double>(s);
  std::mt19937_64 rng(7);
  bool freeze = true, finite = true;
  double d0 = toy_distance(g, 99), d500 = 0;
  for (int it = 1; it <= 1000; ++it) {
    const auto gen = g.gnet.params;
    discriminator_step(g, toy::two_moons_batch<double>(16, rng), rng);
    freeze = freeze && g.gnet.params.bitwise_equal(gen);
    const auto disc = g.dnet.params, p = g.pnet.params;
    generator_step(g, 16, rng);
    freeze = freeze && g.dnet.params.bitwise_equal(disc) && g.pnet.params.bitwise_equal(p);
    if (it % 100 == 0) finite = finite && all_finite(g);
    if (it == 500) d500 = toy_distance(g, 99);
  }
  const double d1000 = toy_distance(g, 99);
  finite = finite && std::isfinite(d1000);

  // infoGAN: Qnet freeze under a generator step, then one full epoch on
  // MNIST when available, otherwise on the 3200-image fixture.
  const char* root = std::getenv("TAGI_MNIST_ROOT");
  const bool full = root && *root;
  auto data = load_mnist({"mnist", full ? std::string(root) : std::string(TAGI_TEST_DATA "/mnist-gan"),
                          Preprocessing::UnitRangeMeanSubtract, full});
  auto ms = GanSettings::mnist();
  ms.seed = 1;
  auto ig = make_mnist_infogan<float>(ms);
  ig.image_norm = data.train.norm;
  std::mt19937_64 irng(1);
  const auto q = ig.qnet->params;
  generator_step(ig, 4, irng);
  freeze = freeze && ig.qnet->params.bitwise_equal(q);
  const auto log = train_gan_epoch(ig, data.train, 16, irng);
  const auto imgs = generate_grid(ig, traversal_codes(ig.layout, 4, {0.0, 0.0}, irng));
  bool grid_finite = true;
  for (const auto& im : imgs)
    for (double v : im) grid_finite = grid_finite && std::isfinite(v);
  const auto cv = column_pixel_variance(imgs, ig.layout.classes);
  const double min_var = *std::min_element(cv.begin(), cv.end());

  detail = std::string("freeze ") + (freeze ? "ok" : "BROKEN") + ", finite " + (finite ? "ok" : "NO") +
           fmt(", toy distance %.3f -> %.3f (it 500), %.3f (it 1000)", d0, d500, d1000) + "; infoGAN epoch (" +
           std::to_string(data.train.size()) + " images) " + std::to_string(log.iterations) + " iterations, grid " + (grid_finite ? "finite" : "NON-FINITE") +
           fmt(", min per-class pixel variance %.1f", min_var);
  return freeze && finite && d500 < d0 && log.iterations == data.train.size() / 16 && grid_finite && min_var > 0
             ? Status::Pass
             : Status::Fail;
}

Status metric_oracles(std::string& detail) {
  const auto r = verify::synthetic_records(10'000, 11);
  const double ece = expected_calibration_error(r, 15), ece_ref = verify::brute_ece(r, 15);
  const double au = auroc_correctness(r), au_ref = verify::brute_auroc(r);
  std::vector<PredictionRecord> u;
  const std::vector<double> flat(10, 0.0);
  for (std::size_t i = 0; i < 10'000; ++i) u.push_back(make_record<double>(i % 10, flat));
  const double nll_gap = std::abs(negative_log_likelihood(u) - std::numbers::ln10);
  detail = fmt("ECE %.12f vs %.12f, AUROC %.12f vs %.12f", ece, ece_ref, au, au_ref) +
           fmt(", uniform NLL - ln10 = %.1e", nll_gap);
  return std::abs(ece - ece_ref) <= 1e-12 && au == au_ref && nll_gap <= 1e-9 ? Status::Pass : Status::Fail;
}

}  // namespace

int main() {
  criterion("moment-oracle-suite", moment_suite);
  criterion("cross-covariance", cross_cov);
  criterion("joint-conditioning", joint);
  criterion("mnist-epoch1", mnist);
  criterion("cifar10-epoch1", cifar);
  criterion("normalization", normalization);
  criterion("noise-decay", decay);
  criterion("linear-scaling", scaling);
  criterion("gan-contract", gan);
  criterion("metric-oracles", metric_oracles);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
