#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tagi/error.hpp"
#include "tagi/gaussian.hpp"

namespace tagi {

/// Depth x width x height, matching the column order of the architecture
/// tables. Units are laid out channel-major: c*H*W + y*W + x.
struct Shape {
  int depth = 1;
  int width = 1;
  int height = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(depth) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(height);
  }
  std::size_t plane() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  bool flat() const { return width == 1 && height == 1; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.depth) + "x" + std::to_string(s.width) + "x" + std::to_string(s.height);
}

enum class LayerKind { FullyConnected, Conv2d, TransposedConv2d, AvgPool, LayerNorm, BatchNorm, Output };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Conv2d: return "conv";
    case LayerKind::TransposedConv2d: return "tconv";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::LayerNorm: return "layernorm";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Output: return "output";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::FullyConnected;
  Shape in_shape;
  Shape out_shape;
  int kernel = 0;
  int padding = 0;
  int stride = 1;
  Activation activation;
  // Operation performed by an Output row: FullyConnected, Conv2d or
  // TransposedConv2d.
  LayerKind output_op = LayerKind::FullyConnected;
  // Unit count printed in the reference architecture table when it differs
  // from the functional out_shape (0 = identical).
  int table_units = 0;
  // Normalization layers only: force mu=0, sigma=1.
  bool identity_limit = false;
  double norm_eps = 1e-6;

  LayerKind op() const { return kind == LayerKind::Output ? output_op : kind; }
  bool has_params() const {
    const auto o = op();
    return o == LayerKind::FullyConnected || o == LayerKind::Conv2d || o == LayerKind::TransposedConv2d;
  }
  bool is_norm() const { return kind == LayerKind::LayerNorm || kind == LayerKind::BatchNorm; }

  std::size_t fan_in() const {
    switch (op()) {
      case LayerKind::FullyConnected: return in_shape.size();
      case LayerKind::Conv2d:
      case LayerKind::TransposedConv2d:
        return static_cast<std::size_t>(in_shape.depth) * static_cast<std::size_t>(kernel) *
               static_cast<std::size_t>(kernel);
      default: return 0;
    }
  }
  std::size_t weight_count() const {
    if (!has_params()) return 0;
    return bias_count() * fan_in();
  }
  std::size_t bias_count() const {
    if (!has_params()) return 0;
    return op() == LayerKind::FullyConnected ? out_shape.size() : static_cast<std::size_t>(out_shape.depth);
  }
};

// Standard convolution arithmetic.
inline int conv_out_extent(int in, int k, int p, int s) { return (in + 2 * p - k) / s + 1; }

// Transposed convolution with output padding s-1, so stride s upsamples by s
// when k = 2p+1.
inline int tconv_out_extent(int in, int k, int p, int s) { return (in - 1) * s - 2 * p + k + (s - 1); }

inline int tconv_in_extent(int out, int k, int p, int s) {
  const int num = out + 2 * p - k + 1;
  return num % s == 0 ? num / s : -1;
}

inline int conv_in_extent(int out, int k, int p, int s) { return (out - 1) * s - 2 * p + k; }

/// Per output position, the input unit feeding each kernel slot (-1 for
/// padding or a missing stride tap). Built once per layer; the forward pass
/// gathers through it and the backward sweep scatters through it.
struct GatherMap {
  std::size_t positions = 0;
  std::size_t slots = 0;
  std::vector<std::int32_t> index;  // positions x slots

  std::int32_t at(std::size_t p, std::size_t k) const { return index[p * slots + k]; }
};

inline GatherMap build_conv_map(const Shape& in, const Shape& out, int k, int pad, int stride) {
  GatherMap m;
  m.positions = out.plane();
  m.slots = static_cast<std::size_t>(in.depth) * k * k;
  m.index.assign(m.positions * m.slots, -1);
  for (int oy = 0; oy < out.height; ++oy)
    for (int ox = 0; ox < out.width; ++ox) {
      const std::size_t p = static_cast<std::size_t>(oy) * out.width + ox;
      std::size_t slot = 0;
      for (int c = 0; c < in.depth; ++c)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx, ++slot) {
            const int iy = oy * stride - pad + ky;
            const int ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) continue;
            m.index[p * m.slots + slot] =
                static_cast<std::int32_t>(static_cast<std::size_t>(c) * in.plane() +
                                          static_cast<std::size_t>(iy) * in.width + ix);
          }
    }
  return m;
}

// Output (oy, ox) receives input (iy, ix) through tap (ky, kx) when
// oy = iy*stride - pad + ky.
inline GatherMap build_tconv_map(const Shape& in, const Shape& out, int k, int pad, int stride) {
  GatherMap m;
  m.positions = out.plane();
  m.slots = static_cast<std::size_t>(in.depth) * k * k;
  m.index.assign(m.positions * m.slots, -1);
  for (int oy = 0; oy < out.height; ++oy)
    for (int ox = 0; ox < out.width; ++ox) {
      const std::size_t p = static_cast<std::size_t>(oy) * out.width + ox;
      std::size_t slot = 0;
      for (int c = 0; c < in.depth; ++c)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx, ++slot) {
            const int ny = oy + pad - ky;
            const int nx = ox + pad - kx;
            if (ny < 0 || nx < 0 || ny % stride != 0 || nx % stride != 0) continue;
            const int iy = ny / stride;
            const int ix = nx / stride;
            if (iy >= in.height || ix >= in.width) continue;
            m.index[p * m.slots + slot] =
                static_cast<std::int32_t>(static_cast<std::size_t>(c) * in.plane() +
                                          static_cast<std::size_t>(iy) * in.width + ix);
          }
    }
  return m;
}

/// Pooling window map within a single channel plane.
inline GatherMap build_pool_map(const Shape& in, const Shape& out, int k, int pad, int stride) {
  return build_conv_map(Shape{1, in.width, in.height}, Shape{1, out.width, out.height}, k, pad, stride);
}

inline GatherMap build_map(const LayerSpec& spec) {
  switch (spec.op()) {
    case LayerKind::Conv2d:
      return build_conv_map(spec.in_shape, spec.out_shape, spec.kernel, spec.padding, spec.stride);
    case LayerKind::TransposedConv2d:
      return build_tconv_map(spec.in_shape, spec.out_shape, spec.kernel, spec.padding, spec.stride);
    case LayerKind::AvgPool:
      return build_pool_map(spec.in_shape, spec.out_shape, spec.kernel, spec.padding, spec.stride);
    default: return {};
  }
}

/// Output shape implied by the layer's input shape and hyperparameters.
inline Shape infer_out_shape(const LayerSpec& s) {
  switch (s.op()) {
    case LayerKind::Conv2d:
      return {s.out_shape.depth, conv_out_extent(s.in_shape.width, s.kernel, s.padding, s.stride),
              conv_out_extent(s.in_shape.height, s.kernel, s.padding, s.stride)};
    case LayerKind::TransposedConv2d:
      return {s.out_shape.depth, tconv_out_extent(s.in_shape.width, s.kernel, s.padding, s.stride),
              tconv_out_extent(s.in_shape.height, s.kernel, s.padding, s.stride)};
    case LayerKind::AvgPool:
      return {s.in_shape.depth, conv_out_extent(s.in_shape.width, s.kernel, s.padding, s.stride),
              conv_out_extent(s.in_shape.height, s.kernel, s.padding, s.stride)};
    case LayerKind::LayerNorm:
    case LayerKind::BatchNorm: return s.in_shape;
    case LayerKind::FullyConnected:
    case LayerKind::Output: return s.out_shape;
  }
  return s.out_shape;
}

}  // namespace tagi
