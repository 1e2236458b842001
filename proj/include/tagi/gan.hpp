#pragma once

// GAN and infoGAN training by alternating discriminator and generator
// updates. Dnet is the shared trunk, Pnet scores real vs fake from the Dnet
// output, Qnet recovers the latent codes of fake images, Gnet maps latent
// codes to images.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <cstdint>
#include <optional>
#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "tagi/data.hpp"
#include "tagi/inference.hpp"
#include "tagi/network.hpp"

namespace tagi {

/// How a latent code is laid out as the generator input:
/// [noise | one-hot categoricals | continuous | constant padding].
struct LatentLayout {
  std::size_t noise = 0;
  std::size_t categoricals = 0;
  std::size_t classes = 0;  // per categorical
  std::size_t continuous = 0;
  std::size_t pad = 0;  // constant-1 inputs filling the generator's declared width

  std::size_t input_width() const { return noise + categoricals * classes + continuous + pad; }
  /// Width of the Qnet target: one-hot categoricals then continuous codes.
  std::size_t code_width() const { return categoricals * classes + continuous; }

  static LatentLayout mnist() { return {62, 1, 10, 2, 1}; }
  static LatentLayout celeba() { return {128, 10, 10, 0, 10}; }
};

struct LatentCode {
  std::vector<double> noise;
  std::vector<std::size_t> x_d;
  std::vector<double> x_c;
};

/// noise ~ N(0, 1), each categorical uniform over its classes, continuous
/// codes ~ U(-1, 1).
template <typename Rng>
LatentCode sample_latent(const LatentLayout& layout, Rng& rng) {
  LatentCode c;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> cls(0, layout.classes ? layout.classes - 1 : 0);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  c.noise.resize(layout.noise);
  for (auto& v : c.noise) v = gauss(rng);
  c.x_d.resize(layout.categoricals);
  for (auto& v : c.x_d) v = cls(rng);
  c.x_c.resize(layout.continuous);
  for (auto& v : c.x_c) v = unif(rng);
  return c;
}

template <typename T>
void generator_input(const LatentCode& c, const LatentLayout& layout, T* out) {
  std::size_t k = 0;
  for (double v : c.noise) out[k++] = static_cast<T>(v);
  for (std::size_t d = 0; d < layout.categoricals; ++d)
    for (std::size_t j = 0; j < layout.classes; ++j) out[k++] = T(c.x_d[d] == j ? 1 : 0);
  for (double v : c.x_c) out[k++] = static_cast<T>(v);
  for (std::size_t p = 0; p < layout.pad; ++p) out[k++] = T(1);
}

template <typename T>
void code_target(const LatentCode& c, const LatentLayout& layout, T* out) {
  std::size_t k = 0;
  for (std::size_t d = 0; d < layout.categoricals; ++d)
    for (std::size_t j = 0; j < layout.classes; ++j) out[k++] = T(c.x_d[d] == j ? 1 : 0);
  for (double v : c.x_c) out[k++] = static_cast<T>(v);
}

/// Deterministic generator inputs (zero variance) for a list of codes.
template <typename T>
BatchState<T> latent_batch(const std::vector<LatentCode>& codes, const LatentLayout& layout) {
  BatchState<T> s(codes.size(), layout.input_width());
  for (std::size_t b = 0; b < codes.size(); ++b) generator_input<T>(codes[b], layout, s.mean.data() + b * s.units);
  return s;
}

// ---------------------------------------------------------------------------

namespace presets {

// Small dense nets for two-dimensional toy data.
inline constexpr const char* kToyGnet = R"(name toy-gnet
head generator
input 4x1x1
fc      32x1x1 - - - relu -
fc      32x1x1 - - - relu -
output  2x1x1  - - - -    -
)";

inline constexpr const char* kToyDnet = R"(name toy-dnet
head discriminator
input 2x1x1
fc      32x1x1 - - - lrelu -
output  16x1x1 - - - lrelu -
)";

inline constexpr const char* kToyPnet = R"(name toy-pnet
head discriminator
input 16x1x1
output 1x1x1 - - - - -
)";

}  // namespace presets

struct GanSettings {
  double sigma_v_p = 3.0;
  double sigma_v_q = 3.0;
  double eta = 0.975;
  std::uint64_t seed = 0;

  static GanSettings mnist() { return {3.0, 3.0, 0.975, 0}; }
  static GanSettings celeba() { return {3.0, 8.0, 0.975, 0}; }
};

template <typename T>
struct GanBundle {
  BuiltNetwork<T> gnet;
  BuiltNetwork<T> dnet;
  BuiltNetwork<T> pnet;
  std::optional<BuiltNetwork<T>> qnet;
  ObservationModel<T> obs_p;
  ObservationModel<T> obs_q;
  LatentLayout layout;
  Normalizer image_norm;  // maps generator outputs back to pixels
};

template <typename T>
GanBundle<T> make_gan(const NetworkConfig& g, const NetworkConfig& d, const NetworkConfig& p,
                      const std::optional<NetworkConfig>& q, const LatentLayout& layout, const GanSettings& s) {
  if (g.input.size() != layout.input_width())
    throw ConfigError("gan: generator input width " + std::to_string(g.input.size()) + " but latent layout needs " +
                      std::to_string(layout.input_width()));
  if (g.output_units() != d.input.size()) throw ConfigError("gan: generator output does not match the discriminator input");
  if (p.input.size() != d.output_units()) throw ConfigError("gan: Pnet input does not match the Dnet output");
  if (p.output_units() != 1) throw ConfigError("gan: Pnet must have a single output unit");
  if (q) {
    if (q->input.size() != d.output_units()) throw ConfigError("gan: Qnet input does not match the Dnet output");
    if (q->output_units() != layout.code_width())
      throw ConfigError("gan: Qnet output width " + std::to_string(q->output_units()) + " but latent codes need " +
                        std::to_string(layout.code_width()));
  }
  GanBundle<T> b{build<T>(g, s.seed + 1),
                 build<T>(d, s.seed + 2),
                 build<T>(p, s.seed + 3),
                 std::nullopt,
                 {static_cast<T>(s.sigma_v_p), static_cast<T>(s.eta), 0},
                 {static_cast<T>(s.sigma_v_q), static_cast<T>(s.eta), 0},
                 layout,
                 {}};
  if (q) b.qnet = build<T>(*q, s.seed + 4);
  const std::size_t C = static_cast<std::size_t>(g.output_layer().out_shape.depth);
  b.image_norm = {std::vector<double>(C, 0.0), std::vector<double>(C, 1.0)};
  return b;
}

/// The MNIST infoGAN from the built-in presets.
template <typename T>
GanBundle<T> make_mnist_infogan(const GanSettings& s) {
  return make_gan<T>(preset("mnist-infogan-gnet"), preset("mnist-infogan-dnet"), preset("mnist-infogan-pnet"),
                     preset("mnist-infogan-qnet"), LatentLayout::mnist(), s);
}

template <typename T>
GanBundle<T> make_celeba_infogan(const GanSettings& s) {
  return make_gan<T>(preset("celeba-infogan-gnet"), preset("celeba-infogan-dnet"), preset("celeba-infogan-pnet"),
                     preset("celeba-infogan-qnet"), LatentLayout::celeba(), s);
}

template <typename T>
GanBundle<T> make_toy_gan(const GanSettings& s) {
  return make_gan<T>(parse_config(presets::kToyGnet), parse_config(presets::kToyDnet),
                     parse_config(presets::kToyPnet), std::nullopt, LatentLayout{4, 0, 0, 0, 0}, s);
}

// ---------------------------------------------------------------------------
// Two-moons toy data: an upper half circle of radius 1 centred at (0, 0) and
// a lower half circle centred at (1, 0.5), with Gaussian jitter.

namespace toy {

template <typename Rng>
std::array<double, 2> two_moons_point(Rng& rng, double jitter = 0.05) {
  std::uniform_real_distribution<double> t(0.0, std::numbers::pi);
  std::bernoulli_distribution upper(0.5);
  std::normal_distribution<double> n(0.0, jitter);
  const double a = t(rng);
  if (upper(rng)) return {std::cos(a) + n(rng), std::sin(a) + n(rng)};
  return {1.0 - std::cos(a) + n(rng), 0.5 - std::sin(a) + n(rng)};
}

template <typename T, typename Rng>
BatchState<T> two_moons_batch(std::size_t n, Rng& rng, double jitter = 0.05) {
  BatchState<T> s(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = two_moons_point(rng, jitter);
    s.mean[2 * i] = static_cast<T>(p[0]);
    s.mean[2 * i + 1] = static_cast<T>(p[1]);
  }
  return s;
}

/// Euclidean distance from (x, y) to the noiseless two-moons curve.
inline double two_moons_distance(double x, double y) {
  auto arc = [](double dx, double dy, bool upper) {
    const double r = std::hypot(dx, dy);
    if ((upper && dy >= 0) || (!upper && dy <= 0)) return std::abs(r - 1.0);
    return std::min(std::hypot(dx - 1.0, dy), std::hypot(dx + 1.0, dy));
  };
  return std::min(arc(x, y, true), arc(x - 1.0, y - 0.5, false));
}

}  // namespace toy

struct GanStepStats {
  UpdateStats update;
  double p_real_mean = 0;  // mean Pnet output over the step's batch
};

namespace detail {

template <typename T>
std::vector<LatentCode> sample_codes(const LatentLayout& layout, std::size_t n, std::mt19937_64& rng) {
  std::vector<LatentCode> c;
  c.reserve(n);
  for (std::size_t i = 0; i < n; ++i) c.push_back(sample_latent(layout, rng));
  return c;
}

/// Forward through Dnet and its heads; returns the summed innovation on the
/// Dnet output after observing `p_target` at Pnet and, when codes are
/// given, the codes at Qnet. Head deltas are written when requested.
template <typename T>
Innovation<T> heads_backward(GanBundle<T>& g, const BatchState<T>& image, T p_target,
                             const std::vector<LatentCode>* codes, ParameterStore<T>* p_delta,
                             ParameterStore<T>* q_delta, double* p_mean) {
  const auto& trunk = g.dnet.net.forward(g.dnet.params, image);
  const auto& pout = g.pnet.net.forward(g.pnet.params, trunk);
  const std::size_t B = image.batch;
  if (p_mean) {
    double s = 0;
    for (std::size_t b = 0; b < B; ++b) s += pout.mean[b];
    *p_mean = s / static_cast<double>(B);
  }
  std::vector<T> yp(B, p_target);
  auto rp = g.pnet.net.backward(g.pnet.params, output_innovation(pout, std::span<const T>(yp), g.obs_p.sigma_v),
                                p_delta != nullptr, true);
  if (p_delta) *p_delta = std::move(rp.deltas);
  Innovation<T> d = std::move(rp.input);
  if (codes && g.qnet) {
    const auto& qout = g.qnet->net.forward(g.qnet->params, trunk);
    std::vector<T> yq(B * qout.units);
    for (std::size_t b = 0; b < B; ++b) code_target<T>((*codes)[b], g.layout, yq.data() + b * qout.units);
    auto rq = g.qnet->net.backward(g.qnet->params,
                                   output_innovation(qout, std::span<const T>(yq), g.obs_q.sigma_v),
                                   q_delta != nullptr, true);
    if (q_delta) *q_delta = std::move(rq.deltas);
    d += rq.input;
  }
  return d;
}

/// One discriminator update on a batch with a fixed real/fake label.
template <typename T>
GanStepStats discriminator_update(GanBundle<T>& g, const BatchState<T>& image, T target,
                                  const std::vector<LatentCode>* codes) {
  GanStepStats st;
  ParameterStore<T> dp, dq;
  const Innovation<T> d = heads_backward(g, image, target, codes, &dp, g.qnet && codes ? &dq : nullptr,
                                         &st.p_real_mean);
  auto rd = g.dnet.net.backward(g.dnet.params, d, true, false);
  st.update += apply_deltas(g.dnet.params, rd.deltas);
  st.update += apply_deltas(g.pnet.params, dp);
  if (g.qnet && codes) st.update += apply_deltas(g.qnet->params, dq);
  return st;
}

}  // namespace detail

/// Generator forward pass on sampled codes: the fake image moments.
template <typename T>
BatchState<T> generate_moments(GanBundle<T>& g, const std::vector<LatentCode>& codes) {
  return g.gnet.net.forward(g.gnet.params, latent_batch<T>(codes, g.layout));
}

/// Updates Dnet, Pnet and Qnet: the real batch observed as 1, then a fake
/// batch of the same size observed as 0 (plus its codes at Qnet). Gnet
/// parameters are only read.
template <typename T>
GanStepStats discriminator_step(GanBundle<T>& g, const BatchState<T>& real, std::mt19937_64& rng) {
  if (real.batch == 0) throw PreconditionError("discriminator_step: empty batch");
  GanStepStats st = detail::discriminator_update<T>(g, real, T(1), nullptr);
  const auto codes = detail::sample_codes<T>(g.layout, real.batch, rng);
  const BatchState<T> fake = generate_moments(g, codes);
  const GanStepStats sf = detail::discriminator_update<T>(g, fake, T(0), &codes);
  st.update += sf.update;
  return st;
}

/// Updates Gnet only: fake images observed as real at Pnet and as their
/// own codes at Qnet, with innovations passed back through the frozen heads
/// and Dnet into the generator.
template <typename T>
GanStepStats generator_step(GanBundle<T>& g, std::size_t batch, std::mt19937_64& rng) {
  if (batch == 0) throw PreconditionError("generator_step: empty batch");
  GanStepStats st;
  const auto codes = detail::sample_codes<T>(g.layout, batch, rng);
  const BatchState<T> fake = generate_moments(g, codes);
  const Innovation<T> d = detail::heads_backward<T>(g, fake, T(1), &codes, nullptr, nullptr, &st.p_real_mean);
  auto rd = g.dnet.net.backward(g.dnet.params, d, false, true);
  auto rg = g.gnet.net.backward(g.gnet.params, rd.input, true, false);
  st.update = apply_deltas(g.gnet.params, rg.deltas);
  return st;
}

/// Epoch boundary: both observation noises decay with the shared factor.
template <typename T>
void decay_gan_noise(GanBundle<T>& g) {
  g.obs_p = decay_noise(g.obs_p);
  g.obs_q = decay_noise(g.obs_q);
}

/// Generator output means mapped back to pixel values in [0, 255], one
/// planar image per code, in the order given.
template <typename T>
std::vector<std::vector<double>> generate_grid(GanBundle<T>& g, const std::vector<LatentCode>& codes) {
  if (codes.empty()) return {};
  const BatchState<T> out = generate_moments(g, codes);
  const Shape shape = g.gnet.net.config().output_layer().out_shape;
  const std::size_t plane = shape.plane();
  std::vector<std::vector<double>> imgs(codes.size(), std::vector<double>(out.units));
  for (std::size_t b = 0; b < codes.size(); ++b)
    for (std::size_t k = 0; k < out.units; ++k)
      imgs[b][k] = g.image_norm.to_pixel(static_cast<double>(out.mean[b * out.units + k]), k / plane);
  return imgs;
}

/// Codes for a traversal grid: one row per sample of noise, one column per
/// class of the first categorical; continuous codes are set to `x_c`.
template <typename Rng>
std::vector<LatentCode> traversal_codes(const LatentLayout& layout, std::size_t rows, const std::vector<double>& x_c,
                                        Rng& rng) {
  std::vector<LatentCode> codes;
  const std::size_t cols = layout.classes ? layout.classes : 1;
  for (std::size_t r = 0; r < rows; ++r) {
    const LatentCode base = sample_latent(layout, rng);
    for (std::size_t c = 0; c < cols; ++c) {
      LatentCode k = base;
      if (!k.x_d.empty()) k.x_d[0] = c;
      for (std::size_t i = 0; i < k.x_c.size() && i < x_c.size(); ++i) k.x_c[i] = x_c[i];
      codes.push_back(std::move(k));
    }
  }
  return codes;
}

/// Fraction of real (Pnet mean > 0.5) and fake (<= 0.5) inputs classified
/// correctly.
template <typename T>
double discriminator_accuracy(GanBundle<T>& g, const BatchState<T>& real, const BatchState<T>& fake) {
  std::size_t ok = 0;
  for (const auto* b : {&real, &fake}) {
    const auto& trunk = g.dnet.net.forward(g.dnet.params, *b);
    const auto& p = g.pnet.net.forward(g.pnet.params, trunk);
    for (std::size_t i = 0; i < b->batch; ++i) ok += (b == &real) == (p.mean[i] > T(0.5));
  }
  return static_cast<double>(ok) / static_cast<double>(real.batch + fake.batch);
}

struct GanEpochLog {
  int epoch = 0;
  std::size_t iterations = 0;
  double p_real = 0;  // mean Pnet output on real batches
  double p_fake = 0;  // mean Pnet output on generated batches during generator steps
  std::size_t clamp_count = 0;
  double sigma_v_p = 0;
  double sigma_v_q = 0;
};

/// One pass over a dataset in a seeded shuffled order: per mini-batch one
/// discriminator step then one generator step of the same size, followed by
/// the noise decay. `max_batches` = 0 means the whole set.
template <typename T>
GanEpochLog train_gan_epoch(GanBundle<T>& g, const ImageDataset& data, std::size_t B, std::mt19937_64& rng,
                            std::size_t max_batches = 0) {
  if (data.size() == 0) throw PreconditionError("gan: empty training set");
  if (data.shape.size() != g.dnet.net.input_units()) throw ConfigError("gan: image shape does not match the Dnet");
  GanEpochLog log;
  log.epoch = g.obs_p.epoch + 1;
  log.sigma_v_p = static_cast<double>(g.obs_p.sigma_v);
  log.sigma_v_q = static_cast<double>(g.obs_q.sigma_v);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t lo = 0; lo < data.size(); lo += B) {
    // Batch normalization in the Dnet needs at least two observations.
    const std::size_t hi = std::min(data.size(), lo + B);
    if (hi - lo < 2) break;
    BatchState<T> real(hi - lo, data.shape.size());
    for (std::size_t i = lo; i < hi; ++i) data.fill<T>(order[i], real.mean.data() + (i - lo) * real.units);
    const auto sd = discriminator_step(g, real, rng);
    const auto sg = generator_step(g, hi - lo, rng);
    log.p_real += sd.p_real_mean;
    log.p_fake += sg.p_real_mean;
    log.clamp_count += sd.update.clamp_count + sg.update.clamp_count;
    ++log.iterations;
    if (max_batches && log.iterations >= max_batches) break;
  }
  if (log.iterations) {
    log.p_real /= static_cast<double>(log.iterations);
    log.p_fake /= static_cast<double>(log.iterations);
  }
  decay_gan_noise(g);
  return log;
}

/// Pixel variance per column of a row-major grid of images (one column per
/// class in a traversal grid).
inline std::vector<double> column_pixel_variance(const std::vector<std::vector<double>>& images, std::size_t cols) {
  std::vector<double> out(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0, s2 = 0, n = 0;
    for (std::size_t i = c; i < images.size(); i += cols)
      for (double v : images[i]) {
        s += v;
        s2 += v * v;
        n += 1;
      }
    if (n > 0) out[c] = s2 / n - (s / n) * (s / n);
  }
  return out;
}

}  // namespace tagi
