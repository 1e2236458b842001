#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tagi/gan.hpp"

using namespace tagi;

namespace {

GanBundle<double> toy_gan(std::uint64_t seed, double sigma_p = 3.0) {
  GanSettings s;
  s.seed = seed;
  s.sigma_v_p = sigma_p;
  return make_toy_gan<double>(s);
}

double manifold_distance(GanBundle<double>& g, std::uint64_t seed, std::size_t n = 1000) {
  std::mt19937_64 rng(seed);
  const auto f = generate_moments(g, detail::sample_codes<double>(g.layout, n, rng));
  double d = 0;
  for (std::size_t i = 0; i < n; ++i) d += toy::two_moons_distance(f.mean[2 * i], f.mean[2 * i + 1]);
  return d / static_cast<double>(n);
}

}  // namespace

TEST(Latent, PresetWidths) {
  const auto m = LatentLayout::mnist();
  EXPECT_EQ(m.noise, 62u);
  EXPECT_EQ(m.categoricals * m.classes, 10u);
  EXPECT_EQ(m.continuous, 2u);
  EXPECT_EQ(m.input_width(), 75u);
  EXPECT_EQ(m.code_width(), 12u);
  const auto c = LatentLayout::celeba();
  EXPECT_EQ(c.noise, 128u);
  EXPECT_EQ(c.categoricals, 10u);
  EXPECT_EQ(c.classes, 10u);
  EXPECT_EQ(c.continuous, 0u);
  EXPECT_EQ(c.input_width(), 238u);
  EXPECT_EQ(c.code_width(), 100u);
}

TEST(Latent, SampleDimensionsAndRanges) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto c = sample_latent(LatentLayout::mnist(), rng);
    EXPECT_EQ(c.noise.size(), 62u);
    ASSERT_EQ(c.x_d.size(), 1u);
    EXPECT_LT(c.x_d[0], 10u);
    ASSERT_EQ(c.x_c.size(), 2u);
    for (double v : c.x_c) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Latent, SameSeedSameCodes) {
  std::mt19937_64 a(5), b(5);
  for (int t = 0; t < 10; ++t) {
    const auto x = sample_latent(LatentLayout::celeba(), a), y = sample_latent(LatentLayout::celeba(), b);
    EXPECT_EQ(x.noise, y.noise);
    EXPECT_EQ(x.x_d, y.x_d);
  }
}

// Pearson chi-square over 10^5 draws, 9 degrees of freedom; the 0.99
// quantile is 21.666.
TEST(Latent, CategoricalIsUniform) {
  std::mt19937_64 rng(2021);
  std::vector<double> count(10, 0.0);
  const int n = 100'000;
  for (int i = 0; i < n; ++i) count[sample_latent(LatentLayout::mnist(), rng).x_d[0]] += 1;
  double chi2 = 0;
  for (double c : count) chi2 += (c - n / 10.0) * (c - n / 10.0) / (n / 10.0);
  EXPECT_LT(chi2, 21.666);
}

TEST(Latent, GeneratorInputLayout) {
  LatentCode c{{0.5, -0.5}, {2}, {0.25}};
  const LatentLayout l{2, 1, 4, 1, 1};
  std::vector<double> in(l.input_width()), tgt(l.code_width());
  generator_input<double>(c, l, in.data());
  code_target<double>(c, l, tgt.data());
  EXPECT_EQ(in, (std::vector<double>{0.5, -0.5, 0, 0, 1, 0, 0.25, 1}));
  EXPECT_EQ(tgt, (std::vector<double>{0, 0, 1, 0, 0.25}));
}

TEST(Bundle, WidthMismatchIsConfigError) {
  EXPECT_THROW(make_gan<double>(preset("mnist-infogan-gnet"), preset("mnist-infogan-dnet"), preset("mnist-infogan-pnet"),
                                preset("mnist-infogan-qnet"), LatentLayout{62, 1, 10, 2, 0}, GanSettings{}),
               ConfigError);
  EXPECT_THROW(make_gan<double>(preset("mnist-infogan-gnet"), preset("celeba-infogan-dnet"),
                                preset("mnist-infogan-pnet"), std::nullopt, LatentLayout::mnist(), GanSettings{}),
               ConfigError);
}

TEST(Bundle, PresetNoiseSettings) {
  const auto m = GanSettings::mnist(), c = GanSettings::celeba();
  EXPECT_EQ(m.sigma_v_p, 3.0);
  EXPECT_EQ(m.sigma_v_q, 3.0);
  EXPECT_EQ(c.sigma_v_p, 3.0);
  EXPECT_EQ(c.sigma_v_q, 8.0);
}

TEST(Bundle, NoiseDecaysIndependently) {
  auto g = make_toy_gan<double>({3.0, 8.0, 0.975, 0});
  decay_gan_noise(g);
  EXPECT_DOUBLE_EQ(g.obs_p.sigma_v, 3.0 * 0.975);
  EXPECT_DOUBLE_EQ(g.obs_q.sigma_v, 8.0 * 0.975);
}

TEST(Steps, DiscriminatorStepLeavesGeneratorBitwise) {
  auto g = toy_gan(1);
  std::mt19937_64 rng(1);
  const auto gen = g.gnet.params, disc = g.dnet.params;
  discriminator_step(g, toy::two_moons_batch<double>(16, rng), rng);
  EXPECT_TRUE(g.gnet.params.bitwise_equal(gen));
  EXPECT_FALSE(g.dnet.params.bitwise_equal(disc));
}

TEST(Steps, GeneratorStepLeavesDiscriminatorBitwise) {
  auto g = toy_gan(2);
  std::mt19937_64 rng(2);
  const auto gen = g.gnet.params, disc = g.dnet.params, p = g.pnet.params;
  generator_step(g, 16, rng);
  EXPECT_TRUE(g.dnet.params.bitwise_equal(disc));
  EXPECT_TRUE(g.pnet.params.bitwise_equal(p));
  EXPECT_FALSE(g.gnet.params.bitwise_equal(gen));
}

TEST(Steps, InfoGanFreezeIncludesQnet) {
  auto s = GanSettings::mnist();
  s.seed = 3;
  auto g = make_mnist_infogan<float>(s);
  std::mt19937_64 rng(3);
  const auto q = g.qnet->params, gen = g.gnet.params;
  generator_step(g, 2, rng);
  EXPECT_TRUE(g.qnet->params.bitwise_equal(q));
  const auto gen2 = g.gnet.params;
  BatchState<float> real(2, 784);
  for (std::size_t i = 0; i < real.mean.size(); ++i) real.mean[i] = static_cast<float>(i % 13) / 13.f - 0.5f;
  discriminator_step(g, real, rng);
  EXPECT_TRUE(g.gnet.params.bitwise_equal(gen2));
  EXPECT_FALSE(g.qnet->params.bitwise_equal(q));
}

TEST(Steps, EmptyBatchIsPreconditionError) {
  auto g = toy_gan(4);
  std::mt19937_64 rng(4);
  EXPECT_THROW(discriminator_step(g, BatchState<double>(0, 2), rng), PreconditionError);
  EXPECT_THROW(generator_step(g, 0, rng), PreconditionError);
}

TEST(Steps, LargeNoiseGivesNearZeroDeltas) {
  auto g = toy_gan(5, 1e8);
  std::mt19937_64 rng(5);
  const auto st = discriminator_step(g, toy::two_moons_batch<double>(16, rng), rng);
  EXPECT_LT(st.update.mean_abs_delta(), 1e-10);
}

TEST(Steps, ZeroDiscriminatorWeightsBlockGeneratorUpdates) {
  auto g = toy_gan(6);
  for (auto& l : g.dnet.params.layers) {
    std::fill(l.w.mean.begin(), l.w.mean.end(), 0.0);
    std::fill(l.w.var.begin(), l.w.var.end(), 0.0);
  }
  std::mt19937_64 rng(6);
  const auto st = generator_step(g, 8, rng);
  EXPECT_EQ(st.update.sum_abs_delta, 0.0);
}

TEST(Steps, AlternationIsDeterministicUnderSeed) {
  auto run = [] {
    auto g = toy_gan(7);
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20; ++i) {
      discriminator_step(g, toy::two_moons_batch<double>(16, rng), rng);
      generator_step(g, 16, rng);
    }
    return g;
  };
  auto a = run(), b = run();
  EXPECT_TRUE(a.gnet.params.bitwise_equal(b.gnet.params));
  EXPECT_TRUE(a.dnet.params.bitwise_equal(b.dnet.params));
}

TEST(Toy, DistanceToCurve) {
  EXPECT_NEAR(toy::two_moons_distance(0, 1), 0, 1e-15);
  EXPECT_NEAR(toy::two_moons_distance(1, -0.5), 0, 1e-15);
  EXPECT_NEAR(toy::two_moons_distance(0, 0), std::sqrt(1.25) - 1, 1e-15);
  EXPECT_NEAR(toy::two_moons_distance(0, 3), 2, 1e-15);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto p = toy::two_moons_point(rng, 0.0);
    EXPECT_LT(toy::two_moons_distance(p[0], p[1]), 1e-12);
  }
}

TEST(Toy, DiscriminatorLearnsAgainstInitialGenerator) {
  auto g = toy_gan(11);
  std::mt19937_64 rng(110);
  for (int i = 0; i < 200; ++i) discriminator_step(g, toy::two_moons_batch<double>(16, rng), rng);
  const auto real = toy::two_moons_batch<double>(500, rng);
  const auto fake = generate_moments(g, detail::sample_codes<double>(g.layout, 500, rng));
  EXPECT_GT(discriminator_accuracy(g, real, fake), 0.5);
}

TEST(Toy, GeneratedSamplesApproachData) {
  auto g = toy_gan(12);
  std::mt19937_64 rng(120);
  const double d0 = manifold_distance(g, 99);
  for (int i = 0; i < 500; ++i) {
    discriminator_step(g, toy::two_moons_batch<double>(16, rng), rng);
    generator_step(g, 16, rng);
  }
  EXPECT_LT(manifold_distance(g, 99), d0);
}

TEST(Grid, IdenticalCodesGiveIdenticalImages) {
  auto s = GanSettings::mnist();
  auto g = make_mnist_infogan<float>(s);
  std::mt19937_64 rng(8);
  const auto c = sample_latent(g.layout, rng);
  // Separate calls repeat bitwise; rows of one batch agree up to float
  // accumulation order.
  EXPECT_EQ(generate_grid(g, {c}), generate_grid(g, {c}));
  const auto imgs = generate_grid(g, {c, c});
  ASSERT_EQ(imgs.size(), 2u);
  double gap = 0;
  for (std::size_t k = 0; k < imgs[0].size(); ++k) gap = std::max(gap, std::abs(imgs[0][k] - imgs[1][k]));
  EXPECT_LT(gap, 1e-3);
  for (double v : imgs[0]) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 255.0);
  }
}

TEST(Grid, TraversalLayout) {
  std::mt19937_64 rng(9);
  const auto codes = traversal_codes(LatentLayout::mnist(), 3, {0.5, -0.5}, rng);
  ASSERT_EQ(codes.size(), 30u);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    EXPECT_EQ(codes[i].x_d[0], i % 10);
    EXPECT_EQ(codes[i].noise, codes[(i / 10) * 10].noise);
    EXPECT_EQ(codes[i].x_c, (std::vector<double>{0.5, -0.5}));
  }
  const auto var = column_pixel_variance({{1, 1}, {0, 2}, {3, 3}, {0, 2}}, 2);
  EXPECT_DOUBLE_EQ(var[0], 1.0);
  EXPECT_DOUBLE_EQ(var[1], 1.0);
}

TEST(Epoch, FewBatchesOnFixture) {
  const auto d = load_mnist({"mnist", TAGI_TEST_DATA "/mnist-mini", Preprocessing::UnitRangeMeanSubtract, false});
  auto g = make_mnist_infogan<float>(GanSettings::mnist());
  g.image_norm = d.train.norm;
  std::mt19937_64 rng(10);
  const auto log = train_gan_epoch(g, d.train, 8, rng, 3);
  EXPECT_EQ(log.iterations, 3u);
  EXPECT_EQ(log.epoch, 1);
  EXPECT_DOUBLE_EQ(g.obs_p.sigma_v, 3.0f * 0.975f);
  const auto imgs = generate_grid(g, traversal_codes(g.layout, 2, {0.0, 0.0}, rng));
  for (const auto& im : imgs)
    for (double v : im) EXPECT_TRUE(std::isfinite(v));
}

TEST(Toy, ThousandIterationsStayFinite) {
  auto g = toy_gan(13);
  std::mt19937_64 rng(130);
  std::size_t clamps = 0;
  for (int i = 0; i < 1000; ++i) {
    clamps += discriminator_step(g, toy::two_moons_batch<double>(16, rng), rng).update.clamp_count;
    clamps += generator_step(g, 16, rng).update.clamp_count;
  }
  for (const auto* net : {&g.gnet, &g.dnet, &g.pnet})
    for (const auto& l : net->params.layers) {
      for (std::size_t i = 0; i < l.w.mean.size(); ++i) {
        ASSERT_TRUE(std::isfinite(l.w.mean[i]));
        ASSERT_GT(l.w.var[i], 0.0);
      }
    }
  RecordProperty("clamps", static_cast<int>(clamps));
}
