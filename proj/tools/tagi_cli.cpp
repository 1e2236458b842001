// tagi: train, evaluate and verify Gaussian-inference networks.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tagi/tagi.hpp"
#include "tagi/verify/cross_cov.hpp"
#include "tagi/verify/joint.hpp"
#include "tagi/verify/sampling.hpp"

namespace fs = std::filesystem;
using namespace tagi;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kData = 4,
  kNumeric = 5,
  kPrecondition = 6,
  kVerifyFailed = 7,
};

struct Options {
  std::string config = "mnist-cnn";
  std::string dataset_root;
  std::string dataset;  // mnist or cifar10; inferred from the input shape when empty
  std::uint64_t seed = 0;
  int epochs = 50;
  std::size_t batch = 16;
  double sigma_v0 = 1.0;
  double eta = 0.975;
  std::string norm = "none";
  std::string out;
  std::string checkpoint;
  std::size_t limit_train = 0;
  std::size_t limit_test = 0;
  bool any_size = false;
};

// `set` lines in the config file take precedence over command-line flags.
void apply_settings(const NetworkConfig& cfg, Options& o) {
  for (const auto& [k, v] : cfg.settings) {
    try {
      if (k == "seed") o.seed = std::stoull(v);
      else if (k == "epochs") o.epochs = std::stoi(v);
      else if (k == "batch") o.batch = std::stoul(v);
      else if (k == "sigma_v0") o.sigma_v0 = std::stod(v);
      else if (k == "eta") o.eta = std::stod(v);
      else if (k == "norm") o.norm = v;
      else if (k == "dataset") o.dataset = v;
      else if (k == "dataset_root") o.dataset_root = v;
      else throw ConfigError("unknown setting '" + k + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("bad value '" + v + "' for setting '" + k + "'");
    }
  }
}

std::optional<LayerKind> parse_norm(const std::string& n) {
  if (n == "none") return std::nullopt;
  if (n == "layer") return LayerKind::LayerNorm;
  if (n == "batch") return LayerKind::BatchNorm;
  throw ConfigError("unknown normalization '" + n + "' (none, layer, batch)");
}

NetworkConfig prepare_config(Options& o) {
  auto cfg = resolve_config(o.config);
  apply_settings(cfg, o);
  cfg = with_normalization(cfg, parse_norm(o.norm));
  if (o.dataset.empty()) {
    if (cfg.input == Shape{1, 28, 28}) o.dataset = "mnist";
    else if (cfg.input == Shape{3, 32, 32}) o.dataset = "cifar10";
    else throw ConfigError("cannot infer a dataset for input " + to_string(cfg.input) + "; add 'set dataset ...'");
  }
  return cfg;
}

TrainTestSplit load_split(const Options& o) {
  if (o.dataset_root.empty()) throw DataError("--dataset-root is required");
  DatasetSpec spec{o.dataset, o.dataset_root, Preprocessing::UnitRangeMeanSubtract, !o.any_size};
  TrainTestSplit s;
  if (o.dataset == "mnist") s = load_mnist(spec);
  else if (o.dataset == "cifar10") s = load_cifar10(spec);
  else throw ConfigError("unknown dataset '" + o.dataset + "'");
  s.train = take(s.train, o.limit_train);
  s.test = take(s.test, o.limit_test);
  return s;
}

int run_train(Options o) {
  const auto cfg = prepare_config(o);
  const auto data = load_split(o);
  auto b = build<float>(cfg, o.seed);
  TrainConfig tc;
  tc.batch = o.batch;
  tc.epochs = o.epochs;
  tc.sigma_v0 = o.sigma_v0;
  tc.eta = o.eta;
  tc.seed = o.seed;
  std::ofstream log;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    log.open(fs::path(o.out) / "metrics.tsv");
    log << metrics_header() << "\n";
  }
  std::cout << metrics_header() << std::endl;
  const auto r = train(b.net, b.params, data.train, data.test, tc, [&](const EpochLog& e) {
    std::cout << format_metrics_line(e) << std::endl;
    if (log) log << format_metrics_line(e) << std::endl;
  });
  if (o.epochs == 0) {
    EpochLog e;
    e.test = r.initial;
    e.sigma_v = o.sigma_v0;
    std::cout << format_metrics_line(e) << std::endl;
    if (log) log << format_metrics_line(e) << std::endl;
  }
  if (!o.out.empty()) save_checkpoint<float>(fs::path(o.out) / "model.tckpt", {{&b.net.config(), &b.params}});
  return kOk;
}

int run_eval(Options o) {
  const auto cfg = prepare_config(o);
  const auto data = load_split(o);
  auto b = build<float>(cfg, o.seed);
  if (!o.checkpoint.empty()) b.params = load_checkpoint<float>(o.checkpoint, {&b.net.config()}).at(0);
  EpochLog e;
  e.test = evaluate(b.net, b.params, data.test, o.batch);
  e.sigma_v = o.sigma_v0;
  std::cout << metrics_header() << "\n" << format_metrics_line(e) << std::endl;
  return kOk;
}

// --- GAN --------------------------------------------------------------------

struct GanOptions {
  std::string model = "mnist";  // mnist, celeba, toy
  std::string dataset_root;
  std::string checkpoint;
  std::string out;
  std::uint64_t seed = 0;
  int epochs = 1;
  std::size_t batch = 16;
  std::size_t max_batches = 0;
  std::size_t iterations = 500;  // toy only, per epoch
  std::size_t rows = 4;
};

GanBundle<float> make_model(const GanOptions& o) {
  if (o.model == "mnist") {
    auto s = GanSettings::mnist();
    s.seed = o.seed;
    return make_mnist_infogan<float>(s);
  }
  if (o.model == "celeba") {
    auto s = GanSettings::celeba();
    s.seed = o.seed;
    return make_celeba_infogan<float>(s);
  }
  if (o.model == "toy") {
    GanSettings s;
    s.seed = o.seed;
    return make_toy_gan<float>(s);
  }
  throw ConfigError("unknown GAN model '" + o.model + "' (mnist, celeba, toy)");
}

std::vector<CheckpointEntry<float>> gan_entries(const GanBundle<float>& g) {
  std::vector<CheckpointEntry<float>> e{
      {&g.gnet.net.config(), &g.gnet.params}, {&g.dnet.net.config(), &g.dnet.params}, {&g.pnet.net.config(), &g.pnet.params}};
  if (g.qnet) e.push_back({&g.qnet->net.config(), &g.qnet->params});
  return e;
}

void save_norm(const fs::path& p, const Normalizer& n) {
  std::ofstream f(p);
  f.precision(17);
  for (std::size_t c = 0; c < n.offset.size(); ++c) f << n.offset[c] << " " << n.scale[c] << "\n";
}

Normalizer load_norm(const fs::path& p, std::size_t channels) {
  Normalizer n{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  std::ifstream f(p);
  for (std::size_t c = 0; f && c < channels; ++c) f >> n.offset[c] >> n.scale[c];
  return n;
}

fs::path write_grid(GanBundle<float>& g, const GanOptions& o, const fs::path& path, std::mt19937_64& rng) {
  const Shape shape = g.gnet.net.config().output_layer().out_shape;
  std::vector<double> xc(g.layout.continuous, 0.0);
  const auto codes = traversal_codes(g.layout, o.rows, xc, rng);
  const auto imgs = generate_grid(g, codes);
  for (const auto& im : imgs)
    for (double v : im)
      if (!std::isfinite(v)) throw NumericError("generate: non-finite pixel");
  return write_image(path, tile_images(imgs, shape, g.layout.classes));
}

int run_gan_train(const GanOptions& o) {
  auto g = make_model(o);
  std::mt19937_64 rng(o.seed);
  std::optional<ImageDataset> data;
  if (o.model != "toy") {
    if (o.dataset_root.empty()) throw DataError("--dataset-root is required");
    if (o.model == "mnist") {
      data = load_mnist({"mnist", o.dataset_root, Preprocessing::UnitRangeMeanSubtract, false}).train;
    } else {
      data = load_image_dir({"celeba32", o.dataset_root, Preprocessing::Standardize, false}, Shape{3, 32, 32});
    }
    g.image_norm = data->norm;
  }
  std::cout << "epoch\titerations\tp_real\tp_fake\tsigma_v_p\tsigma_v_q\tclamp_count" << std::endl;
  for (int e = 1; e <= o.epochs; ++e) {
    GanEpochLog log;
    if (data) {
      log = train_gan_epoch(g, *data, o.batch, rng, o.max_batches);
    } else {
      log.epoch = e;
      log.sigma_v_p = g.obs_p.sigma_v;
      log.sigma_v_q = g.obs_q.sigma_v;
      for (std::size_t i = 0; i < o.iterations; ++i) {
        const auto sd = discriminator_step(g, toy::two_moons_batch<float>(o.batch, rng), rng);
        const auto sg = generator_step(g, o.batch, rng);
        log.p_real += sd.p_real_mean / static_cast<double>(o.iterations);
        log.p_fake += sg.p_real_mean / static_cast<double>(o.iterations);
        log.clamp_count += sd.update.clamp_count + sg.update.clamp_count;
        ++log.iterations;
      }
      decay_gan_noise(g);
    }
    std::cout << log.epoch << '\t' << log.iterations << '\t' << log.p_real << '\t' << log.p_fake << '\t'
              << log.sigma_v_p << '\t' << log.sigma_v_q << '\t' << log.clamp_count << std::endl;
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    save_checkpoint<float>(fs::path(o.out) / "gan.tckpt", gan_entries(g));
    save_norm(fs::path(o.out) / "gan.tckpt.norm", g.image_norm);
    if (o.model != "toy") std::cout << "grid: " << write_grid(g, o, fs::path(o.out) / "grid.png", rng).string() << "\n";
  }
  return kOk;
}

int run_generate(const GanOptions& o) {
  if (o.model == "toy") throw ConfigError("generate: the toy model has no image output");
  auto g = make_model(o);
  if (!o.checkpoint.empty()) {
    std::vector<const NetworkConfig*> cfgs;
    for (const auto& e : gan_entries(g)) cfgs.push_back(e.config);
    auto ps = load_checkpoint<float>(o.checkpoint, cfgs);
    g.gnet.params = std::move(ps[0]);
    g.dnet.params = std::move(ps[1]);
    g.pnet.params = std::move(ps[2]);
    if (g.qnet) g.qnet->params = std::move(ps[3]);
    g.image_norm = load_norm(o.checkpoint + ".norm", g.image_norm.offset.size());
  }
  std::mt19937_64 rng(o.seed);
  const fs::path out = o.out.empty() ? fs::path("grid.png") : fs::path(o.out);
  std::cout << write_grid(g, o, out, rng).string() << "\n";
  return kOk;
}

// --- Verification and benchmarks ---------------------------------------------

int run_verify(std::size_t samples, std::size_t cases, std::uint64_t seed) {
  verify::SuiteOptions so;
  so.samples = samples;
  so.cases = cases;
  so.seed = seed;
  bool ok = true;
  auto report = [&](const verify::CheckOutcome& c) {
    std::cout << (c.passed() ? "ok   " : "FAIL ") << c.summary() << std::endl;
    if (!c.passed()) std::cout << "     worst: " << c.worst << std::endl;
    ok = ok && c.passed();
  };
  verify::run_moment_suite(so, report);
  report(verify::check_cross_cov(so));
  report(verify::check_joint_conditioning(12, 3, 1e-5, seed));
  return ok ? kOk : kVerifyFailed;
}

int run_bench(const std::vector<std::size_t>& widths, std::size_t batch, int repeats, std::uint64_t seed) {
  const auto r = bench_scaling<float>(widths, batch, repeats, seed);
  std::cout << "width\tparams\tseconds\n";
  for (const auto& p : r.points) std::cout << p.width << '\t' << p.params << '\t' << p.seconds << '\n';
  std::cout << "slope " << r.slope << " s/param, intercept " << r.intercept << " s, r2 " << r.r2 << std::endl;
  return kOk;
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

void add_common(CLI::App* c, Options& o) {
  c->add_option("--config", o.config, "Preset name or config file")->capture_default_str();
  c->add_option("--dataset-root", o.dataset_root, "Directory holding the dataset files");
  c->add_option("--seed", o.seed, "Seed for initialization and shuffling")->capture_default_str();
  c->add_option("--batch", o.batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--sigma-v0", o.sigma_v0, "Initial observation noise")->capture_default_str();
  c->add_option("--eta", o.eta, "Per-epoch noise decay factor")->capture_default_str();
  c->add_option("--norm", o.norm, "Normalization after hidden layers")
      ->capture_default_str()
      ->check(CLI::IsMember({"none", "layer", "batch"}));
  c->add_option("--limit-train", o.limit_train, "Use only the first N training examples");
  c->add_option("--limit-test", o.limit_test, "Use only the first N test examples");
  c->add_flag("--any-size", o.any_size, "Accept datasets of non-standard size");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-inference neural networks"};
  app.require_subcommand(1);

  Options train_o, eval_o;
  auto* tr = app.add_subcommand("train", "Train a classifier and log per-epoch metrics");
  add_common(tr, train_o);
  tr->add_option("--epochs", train_o.epochs, "Number of epochs")->capture_default_str();
  tr->add_option("--out", train_o.out, "Directory for metrics.tsv and model.tckpt");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(ev, eval_o);
  ev->add_option("--checkpoint", eval_o.checkpoint, "Checkpoint written by train");
  ev->add_option("--epochs", eval_o.epochs, "Ignored; accepted for symmetry with train");
  ev->add_option("--out", eval_o.out, "Ignored");

  GanOptions gan_o, gen_o;
  auto add_gan = [](CLI::App* c, GanOptions& o) {
    c->add_option("--config", o.model, "GAN model: mnist, celeba or toy")
        ->capture_default_str()
        ->check(CLI::IsMember({"mnist", "celeba", "toy"}));
    c->add_option("--seed", o.seed, "Seed")->capture_default_str();
    c->add_option("--out", o.out, "Output directory (gan-train) or image path (generate)");
    c->add_option("--rows", o.rows, "Rows in the generated grid")->capture_default_str();
  };
  auto* gt = app.add_subcommand("gan-train", "Train a GAN or infoGAN");
  add_gan(gt, gan_o);
  gt->add_option("--dataset-root", gan_o.dataset_root, "MNIST IDX directory or CelebA 32x32 image directory");
  gt->add_option("--epochs", gan_o.epochs, "Number of epochs")->capture_default_str();
  gt->add_option("--batch", gan_o.batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  gt->add_option("--max-batches", gan_o.max_batches, "Stop each epoch after N batches");
  gt->add_option("--iterations", gan_o.iterations, "Iterations per epoch for the toy model")->capture_default_str();

  auto* gn = app.add_subcommand("generate", "Write a latent-traversal image grid");
  add_gan(gn, gen_o);
  gn->add_option("--checkpoint", gen_o.checkpoint, "Checkpoint written by gan-train");

  std::size_t samples = 1'000'000, cases = 100;
  std::uint64_t vseed = 20210213;
  auto* vm = app.add_subcommand("verify-moments", "Check every moment rule against sampling oracles");
  vm->add_option("--samples", samples, "Monte-Carlo samples per case")->capture_default_str();
  vm->add_option("--cases", cases, "Random parameterizations per operation")->capture_default_str();
  vm->add_option("--seed", vseed, "Seed")->capture_default_str();

  std::vector<std::size_t> widths{64, 128, 256, 512};
  std::size_t bbatch = 16;
  int repeats = 15;
  std::uint64_t bseed = 0;
  auto* bs = app.add_subcommand("bench-scaling", "Time one training step against parameter count");
  bs->add_option("--widths", widths, "Hidden widths")->capture_default_str();
  bs->add_option("--batch", bbatch, "Mini-batch size")->capture_default_str();
  bs->add_option("--repeats", repeats, "Timed repeats per width")->capture_default_str();
  bs->add_option("--seed", bseed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (*tr) return guarded([&] { return run_train(train_o); });
  if (*ev) return guarded([&] { return run_eval(eval_o); });
  if (*gt) return guarded([&] { return run_gan_train(gan_o); });
  if (*gn) return guarded([&] { return run_generate(gen_o); });
  if (*vm) return guarded([&] { return run_verify(samples, cases, vseed); });
  if (*bs) return guarded([&] { return run_bench(widths, bbatch, repeats, bseed); });
  return kUsage;
}
