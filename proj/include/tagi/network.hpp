#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tagi/config.hpp"
#include "tagi/layers.hpp"
#include "tagi/params.hpp"

namespace tagi {

// ---------------------------------------------------------------------------
// Built-in architectures. Shapes follow the reference tables row for row;
// `table=N` records a printed width that differs from the functional one.

namespace presets {

inline constexpr const char* kMnistCnn = R"(name mnist-cnn
head classification
input 1x28x28
conv     32x27x27  4 1 1 relu -
avgpool  32x13x13  3 0 2 -    -
conv     64x9x9    5 0 1 relu -
avgpool  64x4x4    3 0 2 -    -
fc       150x1x1   - - - relu -
output   10x1x1    - - - -    - table=11
)";

inline constexpr const char* kCifar10 = R"(name cifar10-3conv
head classification
input 3x32x32
conv     32x32x32  5 2 1 relu -
avgpool  32x16x16  3 1 2 -    -
conv     32x16x16  5 2 1 relu -
avgpool  32x8x8    3 1 2 -    -
conv     64x8x8    5 2 1 relu -
avgpool  64x4x4    3 1 2 -    -
fc       64x1x1    - - - relu -
output   10x1x1    - - - -    - table=11
)";

inline constexpr const char* kMnistDnet = R"(name mnist-infogan-dnet
head discriminator
input 1x28x28
conv       32x28x28  3 1 1 lrelu -
batchnorm  32x28x28  - - - -     -
avgpool    32x14x14  3 1 2 -     -
conv       64x14x14  3 1 1 lrelu -
batchnorm  64x14x14  - - - -     -
avgpool    64x7x7    3 1 2 -     -
output     512x1x1   - - - lrelu -
)";

inline constexpr const char* kMnistPnet = R"(name mnist-infogan-pnet
head discriminator
input 512x1x1
output 1x1x1 - - - - -
)";

inline constexpr const char* kMnistQnet = R"(name mnist-infogan-qnet
head latent
input 512x1x1
fc      300x1x1 - - - relu -
output  12x1x1  - - - -    - table=13
)";

// 64x7x7 = 3136 units feed the first transposed convolution; the table
// prints 3072 for this row.
inline constexpr const char* kMnistGnet = R"(name mnist-infogan-gnet
head generator
input 75x1x1
fc            3136x1x1  - - - relu - table=3072
tconv         64x7x7    3 1 1 relu -
tconv         32x14x14  3 1 2 relu -
output:tconv  1x28x28   3 1 2 -    -
)";

inline constexpr const char* kCelebaDnet = R"(name celeba-infogan-dnet
head discriminator
input 3x32x32
conv       32x32x32  3 1 1 lrelu -
batchnorm  32x32x32  - - - -     -
avgpool    32x16x16  3 1 2 -     -
conv       32x16x16  3 1 1 lrelu -
batchnorm  32x16x16  - - - -     -
avgpool    32x8x8    3 1 2 -     -
conv       64x8x8    3 1 1 lrelu -
batchnorm  64x8x8    - - - -     -
avgpool    64x4x4    3 1 2 -     -
output     256x1x1   - - - lrelu -
)";

inline constexpr const char* kCelebaPnet = R"(name celeba-infogan-pnet
head discriminator
input 256x1x1
output 1x1x1 - - - - -
)";

inline constexpr const char* kCelebaQnet = R"(name celeba-infogan-qnet
head latent
input 256x1x1
fc      256x1x1  - - - relu -
output  100x1x1  - - - -    - table=110
)";

// The last row is printed with S=2, which would double the 32x32 grid; the
// printed 3x32x32 shape needs stride 1.
inline constexpr const char* kCelebaGnet = R"(name celeba-infogan-gnet
head generator
input 238x1x1
fc            1024x1x1  - - - relu -
tconv         64x4x4    3 1 1 relu -
tconv         64x8x8    3 1 2 relu -
tconv         32x16x16  3 1 2 relu -
tconv         32x32x32  3 1 2 relu -
tconv         32x32x32  3 1 1 relu -
output:tconv  3x32x32   3 1 1 -    -
)";

inline std::vector<std::string> names() {
  return {"mnist-cnn",           "cifar10-3conv",       "mnist-infogan-dnet",  "mnist-infogan-pnet",
          "mnist-infogan-qnet",  "mnist-infogan-gnet",  "celeba-infogan-dnet", "celeba-infogan-pnet",
          "celeba-infogan-qnet", "celeba-infogan-gnet"};
}

inline const char* text(const std::string& name) {
  if (name == "mnist-cnn") return kMnistCnn;
  if (name == "cifar10-3conv") return kCifar10;
  if (name == "mnist-infogan-dnet") return kMnistDnet;
  if (name == "mnist-infogan-pnet") return kMnistPnet;
  if (name == "mnist-infogan-qnet") return kMnistQnet;
  if (name == "mnist-infogan-gnet") return kMnistGnet;
  if (name == "celeba-infogan-dnet") return kCelebaDnet;
  if (name == "celeba-infogan-pnet") return kCelebaPnet;
  if (name == "celeba-infogan-qnet") return kCelebaQnet;
  if (name == "celeba-infogan-gnet") return kCelebaGnet;
  return nullptr;
}

}  // namespace presets

inline bool is_preset(const std::string& name) { return presets::text(name) != nullptr; }

inline NetworkConfig preset(const std::string& name) {
  const char* t = presets::text(name);
  if (!t) throw ConfigError("unknown preset '" + name + "'");
  return parse_config(t);
}

/// A preset name or a path to a config file.
inline NetworkConfig resolve_config(const std::string& name_or_path) {
  return is_preset(name_or_path) ? preset(name_or_path) : load_config_file(name_or_path);
}

// ---------------------------------------------------------------------------

template <typename T>
struct BackwardResult {
  ParameterStore<T> deltas;  // empty when parameter updates were not requested
  Innovation<T> input;       // empty unless requested
};

/// A feed-forward chain of layers. Holds connectivity maps and the per-layer
/// caches of the most recent forward pass; parameters live outside in a
/// ParameterStore so that frozen and trainable copies can share one network.
template <typename T>
class Network {
 public:
  explicit Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    resolve_shapes(cfg_);
    maps_.reserve(cfg_.layers.size());
    for (const auto& l : cfg_.layers) maps_.push_back(build_map(l));
    caches_.resize(cfg_.layers.size());
  }

  const NetworkConfig& config() const { return cfg_; }
  std::size_t num_layers() const { return cfg_.layers.size(); }
  std::size_t input_units() const { return cfg_.input.size(); }
  std::size_t output_units() const { return cfg_.output_units(); }
  const LayerCache<T>& cache(std::size_t i) const { return caches_.at(i); }
  LayerCache<T>& cache(std::size_t i) { return caches_.at(i); }
  const BatchState<T>& output() const {
    if (!caches_.back().filled) throw SequencingError("network output requested before a forward pass");
    return caches_.back().a;
  }

  const BatchState<T>& forward(const ParameterStore<T>& ps, const BatchState<T>& input) {
    if (ps.layers.size() != cfg_.layers.size()) throw ConfigError("parameter store does not match the network");
    if (input.units != cfg_.input.size())
      throw ConfigError("input has " + std::to_string(input.units) + " units, network expects " +
                        std::to_string(cfg_.input.size()));
    const BatchState<T>* in = &input;
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
      const auto& spec = cfg_.layers[i];
      auto& cache = caches_[i];
      switch (spec.op()) {
        case LayerKind::FullyConnected:
        case LayerKind::Conv2d:
        case LayerKind::TransposedConv2d: linear_forward(spec, maps_[i], ps.layers[i], *in, cache); break;
        case LayerKind::AvgPool: avg_pool_forward_batch(spec, maps_[i], *in, cache); break;
        case LayerKind::LayerNorm: layer_norm_forward_batch(spec, *in, cache); break;
        case LayerKind::BatchNorm: batch_norm_forward_batch(spec, *in, cache); break;
        case LayerKind::Output: break;
      }
      in = &cache.a;
    }
    return caches_.back().a;
  }

  /// Backward sweep from innovations on the output layer. Parameter deltas
  /// are summed over the batch against the parameters used in forward().
  BackwardResult<T> backward(const ParameterStore<T>& ps, const Innovation<T>& d_out, bool want_deltas,
                             bool want_input) {
    if (d_out.units != output_units()) throw PreconditionError("backward: innovation size does not match the output");
    BackwardResult<T> r;
    if (want_deltas) r.deltas = ParameterStore<T>::zeros_like(ps);
    Innovation<T> cur = d_out;
    for (std::size_t k = cfg_.layers.size(); k-- > 0;) {
      const auto& spec = cfg_.layers[k];
      auto& cache = caches_[k];
      const bool need_in = k > 0 || want_input;
      Innovation<T> next;
      switch (spec.op()) {
        case LayerKind::FullyConnected:
        case LayerKind::Conv2d:
        case LayerKind::TransposedConv2d:
          linear_backward(spec, maps_[k], ps.layers[k], cache, cur, want_deltas ? &r.deltas.layers[k] : nullptr,
                          need_in ? &next : nullptr);
          break;
        case LayerKind::AvgPool: avg_pool_backward(spec, maps_[k], cache, cur, next); break;
        case LayerKind::LayerNorm:
        case LayerKind::BatchNorm: norm_backward(spec, cache, cur, next); break;
        case LayerKind::Output: break;
      }
      if (!need_in) break;
      cur = std::move(next);
    }
    if (want_input) r.input = std::move(cur);
    return r;
  }

 private:
  NetworkConfig cfg_;
  std::vector<GatherMap> maps_;
  std::vector<LayerCache<T>> caches_;
};

template <typename T>
struct BuiltNetwork {
  Network<T> net;
  ParameterStore<T> params;
};

template <typename T>
BuiltNetwork<T> build(const NetworkConfig& cfg, std::uint64_t seed, InitPolicy policy = {}) {
  Network<T> net(cfg);
  auto ps = init_parameters<T>(net.config().layers, seed, policy);
  return {std::move(net), std::move(ps)};
}

// ---------------------------------------------------------------------------
// Classification head.

template <typename T>
struct Classification {
  std::size_t label = 0;
  std::vector<double> scores;  // softmax of output means
};

/// argmax of the output means (lowest index wins ties) and the softmax of
/// the means as per-class scores.
template <typename T>
Classification<T> classify(std::span<const T> means) {
  if (means.empty()) throw PreconditionError("classify: empty output");
  Classification<T> c;
  for (std::size_t i = 1; i < means.size(); ++i)
    if (means[i] > means[c.label]) c.label = i;
  const double mx = static_cast<double>(means[c.label]);
  c.scores.resize(means.size());
  double z = 0;
  for (std::size_t i = 0; i < means.size(); ++i) z += c.scores[i] = std::exp(static_cast<double>(means[i]) - mx);
  for (auto& s : c.scores) s /= z;
  return c;
}

template <typename T>
Classification<T> classify(const GaussianVector<T>& z_out) {
  return classify<T>(std::span<const T>(z_out.mean));
}

/// One-hot pseudo-observation for a class label, observed with noise sigma_v
/// on every output unit.
template <typename T>
struct Target {
  std::vector<T> y;
  T sigma_v;
};

template <typename T>
Target<T> encode_target(std::size_t label, std::size_t num_classes, T sigma_v) {
  if (label >= num_classes)
    throw PreconditionError("encode_target: label " + std::to_string(label) + " out of range for " +
                            std::to_string(num_classes) + " classes");
  Target<T> t{std::vector<T>(num_classes, T(0)), sigma_v};
  t.y[label] = T(1);
  return t;
}

}  // namespace tagi
