#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tagi/inference.hpp"
#include "tagi/network.hpp"

using namespace tagi;

namespace {

std::vector<Shape> chain(const NetworkConfig& cfg) {
  std::vector<Shape> s{cfg.input};
  for (const auto& l : cfg.layers) s.push_back(l.out_shape);
  return s;
}

}  // namespace

TEST(Presets, MnistClassifierChain) {
  const auto cfg = preset("mnist-cnn");
  EXPECT_EQ(cfg.output_kind, OutputKind::Classification);
  const std::vector<Shape> want{{1, 28, 28}, {32, 27, 27}, {32, 13, 13}, {64, 9, 9}, {64, 4, 4}, {150, 1, 1}, {10, 1, 1}};
  EXPECT_EQ(chain(cfg), want);
  EXPECT_EQ(cfg.layers.back().table_units, 11);
}

TEST(Presets, Cifar10Chain) {
  const auto cfg = preset("cifar10-3conv");
  const std::vector<Shape> want{{3, 32, 32}, {32, 32, 32}, {32, 16, 16}, {32, 16, 16}, {32, 8, 8},
                                {64, 8, 8},  {64, 4, 4},   {64, 1, 1},   {10, 1, 1}};
  EXPECT_EQ(chain(cfg), want);
}

TEST(Presets, AllBuildAndRunForward) {
  for (const auto& name : presets::names()) {
    auto [net, ps] = build<float>(preset(name), 1);
    BatchState<float> x(2, net.input_units());
    for (std::size_t i = 0; i < x.mean.size(); ++i) x.mean[i] = static_cast<float>(i % 7) * 0.1f;
    const auto& out = net.forward(ps, x);
    EXPECT_EQ(out.units, net.output_units()) << name;
    for (std::size_t i = 0; i < out.mean.size(); ++i) {
      EXPECT_TRUE(std::isfinite(out.mean[i])) << name;
      EXPECT_GE(out.var[i], 0.f) << name;
    }
  }
}

TEST(Presets, UnknownNameIsConfigError) { EXPECT_THROW(preset("resnet18"), ConfigError); }

TEST(Presets, GeneratorReshapesFlatInput) {
  const auto cfg = preset("mnist-infogan-gnet");
  EXPECT_EQ(cfg.layers[1].in_shape, (Shape{64, 7, 7}));
  EXPECT_EQ(cfg.layers[0].out_shape.size(), 3136u);
  EXPECT_EQ(preset("celeba-infogan-gnet").layers[1].in_shape, (Shape{64, 4, 4}));
}

TEST(Build, SameSeedIsBitwiseIdentical) {
  const auto a = build<double>(preset("mnist-cnn"), 42).params;
  const auto b = build<double>(preset("mnist-cnn"), 42).params;
  const auto c = build<double>(preset("mnist-cnn"), 43).params;
  EXPECT_TRUE(a.bitwise_equal(b));
  EXPECT_FALSE(a.bitwise_equal(c));
}

TEST(Build, HeInitialization) {
  const auto cfg = preset("mnist-cnn");
  const auto ps = build<double>(cfg, 5).params;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    if (!l.has_params()) {
      EXPECT_EQ(ps.layers[i].w.size(), 0u);
      continue;
    }
    const double v = 2.0 / static_cast<double>(l.fan_in());
    for (double x : ps.layers[i].w.var) ASSERT_EQ(x, v);
    for (double x : ps.layers[i].b.var) ASSERT_EQ(x, v);
    for (double x : ps.layers[i].b.mean) ASSERT_EQ(x, 0);
    if (l.fan_in() >= 256) {
      double s = 0, s2 = 0;
      const auto& m = ps.layers[i].w.mean;
      for (double x : m) {
        s += x;
        s2 += x * x;
      }
      const double n = static_cast<double>(m.size());
      const double var = s2 / n - (s / n) * (s / n);
      EXPECT_NEAR(var / v, 1.0, 0.1) << "layer " << i;
    }
  }
}

TEST(Config, ShapeChainViolationNamesLayer) {
  try {
    parse_config("input 1x28x28\nconv 32x28x28 4 1 1 relu -\noutput 10x1x1 - - - - -\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos) << e.what();
  }
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("fc 10x1x1 - - - relu -\n"), ConfigError);
  EXPECT_THROW(parse_config("input 4x1x1\nfc 10x1x1 - - - relu -\n"), ConfigError);
  EXPECT_THROW(parse_config("input 4x1x1\nwarp 10x1x1 - - - - -\noutput 1x1x1 - - - - -\n"), ConfigError);
  EXPECT_THROW(parse_config("input 4x1x1\noutput 1x1x1 - - - softplus -\n"), ConfigError);
  EXPECT_THROW(parse_config("input 4x1x1\noutput 1x1x1 - - - - -\noutput 1x1x1 - - - - -\n"), ConfigError);
  EXPECT_THROW(load_config_file("/nonexistent/net.cfg"), ConfigError);
}

TEST(Config, TextRoundTripKeepsHash) {
  for (const auto& name : presets::names()) {
    const auto cfg = preset(name);
    const auto again = parse_config(to_text(cfg));
    EXPECT_EQ(config_hash(cfg), config_hash(again)) << name;
    EXPECT_EQ(chain(cfg), chain(again)) << name;
  }
}

TEST(Config, SetLinesAreKept) {
  const auto cfg = parse_config("input 2x1x1\nset eta 0.9\noutput 1x1x1 - - - - -\n");
  EXPECT_EQ(cfg.settings.at("eta"), "0.9");
}

TEST(Config, NormalizationFollowsConvBeforePool) {
  const auto cfg = with_normalization(preset("mnist-cnn"), LayerKind::LayerNorm);
  std::vector<LayerKind> kinds;
  for (const auto& l : cfg.layers) kinds.push_back(l.kind);
  const std::vector<LayerKind> want{LayerKind::Conv2d,         LayerKind::LayerNorm, LayerKind::AvgPool,
                                    LayerKind::Conv2d,         LayerKind::LayerNorm, LayerKind::AvgPool,
                                    LayerKind::FullyConnected, LayerKind::LayerNorm, LayerKind::Output};
  EXPECT_EQ(kinds, want);
  // A network that already carries batch normalization is left as is.
  EXPECT_EQ(with_normalization(preset("mnist-infogan-dnet"), LayerKind::BatchNorm).layers.size(),
            preset("mnist-infogan-dnet").layers.size());
}

TEST(Classify, DominantMean) {
  const std::vector<double> m{0.1, 0.9, 0.3};
  EXPECT_EQ(classify<double>(m).label, 1u);
}

TEST(Classify, TieGoesToLowestIndex) {
  const std::vector<double> m{0.2, 0.7, 0.7, 0.7};
  EXPECT_EQ(classify<double>(m).label, 1u);
}

TEST(Classify, AgreesWithDirectArgmaxAndIsShiftInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 500; ++t) {
    std::vector<double> m(10);
    for (auto& x : m) x = n01(rng);
    std::size_t best = 0;
    for (std::size_t i = 0; i < 10; ++i)
      if (m[i] > m[best]) best = i;
    const auto c = classify<double>(m);
    EXPECT_EQ(c.label, best);
    double sum = 0;
    for (double s : c.scores) sum += s;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    auto shifted = m;
    for (auto& x : shifted) x += 3.7;
    const auto d = classify<double>(shifted);
    EXPECT_EQ(d.label, best);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(d.scores[i], c.scores[i], 1e-12);
  }
}

TEST(EncodeTarget, OneHot) {
  const auto t = encode_target<double>(3, 10, 0.5);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(t.y[i], i == 3 ? 1.0 : 0.0);
  EXPECT_EQ(t.sigma_v, 0.5);
  EXPECT_THROW(encode_target<double>(10, 10, 1.0), PreconditionError);
}

TEST(EncodeTarget, BinarySymmetry) {
  const auto a = encode_target<double>(0, 2, 1.0), b = encode_target<double>(1, 2, 1.0);
  EXPECT_EQ(a.y[0], b.y[1]);
  EXPECT_EQ(a.y[1], b.y[0]);
}

TEST(EncodeTarget, RoundTripThroughClassify) {
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(classify<double>(encode_target<double>(k, 10, 1.0).y).label, k);
}

TEST(Backward, PoolDividesByWindowSize) {
  auto [net, ps] = build<double>(parse_config(R"(input 1x2x2
avgpool 1x1x1 2 0 2 - -
output  1x1x1 - - - - -
)"),
                                 1);
  ps.layers[1].w = GaussianVector<double>(std::vector<double>{0.8}, std::vector<double>{0.3});
  ps.layers[1].b = GaussianVector<double>(std::vector<double>{0.0}, std::vector<double>{0.1});
  BatchState<double> x(1, 4);
  x.mean = {0.1, 0.2, 0.3, 0.4};
  x.var = {0.5, 0.5, 0.5, 0.5};
  net.forward(ps, x);
  Innovation<double> d(1, 1);
  d.dm = {1.5};
  d.dS = {-0.7};
  const auto r = net.backward(ps, d, false, true);
  ASSERT_EQ(r.input.dm.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(r.input.dm[i], 0.8 * 1.5 / 4);
    EXPECT_DOUBLE_EQ(r.input.dS[i], 0.64 * -0.7 / 16);
  }
}

TEST(Backward, LayerNormDividesBySigma) {
  auto [net, ps] = build<double>(parse_config(R"(input 3x1x1
layernorm 3x1x1 - - - - -
output    1x1x1 - - - - -
)"),
                                 2);
  BatchState<double> x(1, 3);
  x.mean = {1.0, 2.0, 4.0};
  x.var = {0.5, 0.2, 0.3};
  net.forward(ps, x);
  const double sigma = net.cache(0).norm_stats[0].sigma;
  const auto [mu_ref, sigma_ref] = [&] {
    double mu = 7.0 / 3, second = (0.5 + 1 + 0.2 + 4 + 0.3 + 16) / 3;
    return std::pair{mu, std::sqrt(second - mu * mu)};
  }();
  EXPECT_NEAR(net.cache(0).norm_stats[0].mu, mu_ref, 1e-14);
  EXPECT_NEAR(sigma, sigma_ref, 1e-14);
  Innovation<double> d(1, 1);
  d.dm = {2.0};
  d.dS = {-1.0};
  const auto r = net.backward(ps, d, false, true);
  for (std::size_t i = 0; i < 3; ++i) {
    const double w = ps.layers[1].w.mean[i];
    EXPECT_NEAR(r.input.dm[i], w * 2.0 / sigma, 1e-14);
    EXPECT_NEAR(r.input.dS[i], w * w * -1.0 / (sigma * sigma), 1e-14);
  }
}

TEST(Backward, FrozenSweepLeavesParametersAlone) {
  auto [net, ps] = build<double>(preset("mnist-infogan-pnet"), 3);
  const auto before = ps;
  BatchState<double> x(2, 512);
  for (std::size_t i = 0; i < x.mean.size(); ++i) x.mean[i] = std::sin(static_cast<double>(i));
  net.forward(ps, x);
  Innovation<double> d(2, 1);
  d.dm = {0.3, -0.2};
  d.dS = {-0.1, -0.1};
  const auto r = net.backward(ps, d, false, true);
  EXPECT_TRUE(r.deltas.layers.empty());
  EXPECT_EQ(r.input.units, 512u);
  EXPECT_TRUE(ps.bitwise_equal(before));
}

TEST(Forward, WrongInputSizeIsConfigError) {
  auto [net, ps] = build<double>(preset("mnist-cnn"), 1);
  EXPECT_THROW(net.forward(ps, BatchState<double>(1, 100)), ConfigError);
}

TEST(Forward, BatchRowsAreIndependentWithoutBatchNorm) {
  auto [net, ps] = build<double>(preset("mnist-cnn"), 9);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  BatchState<double> two(2, 784), one(1, 784);
  for (auto& v : two.mean) v = u(rng);
  std::copy(two.mean.begin() + 784, two.mean.end(), one.mean.begin());
  const auto out2 = net.forward(ps, two);
  const auto out1 = net.forward(ps, one);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(out2.mean[10 + i], out1.mean[i], 1e-12);
    EXPECT_NEAR(out2.var[10 + i], out1.var[i], 1e-12);
  }
}
