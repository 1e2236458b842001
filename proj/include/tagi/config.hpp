#pragma once

// Network configuration as a flat text table with one row per layer:
//
//   kind  DxWxH  K  P  S  activation  norm  [table=N]
//
// kind is input, fc, conv, tconv, avgpool, layernorm, batchnorm, output,
// output:conv or output:tconv; '-' marks an unused column. A norm column of
// "layer" or "batch" appends a normalization layer after the row. Lines
// starting with '#' are comments. Directives:
//
//   name <text>
//   head <classification|regression|discriminator|generator|latent> [dim]
//   set <key> <value>         (run settings; these win over CLI flags)

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tagi/error.hpp"
#include "tagi/layer_spec.hpp"

namespace tagi {

enum class OutputKind { Classification, Regression, Discriminator, Generator, LatentHead };

inline std::string to_string(OutputKind k) {
  switch (k) {
    case OutputKind::Classification: return "classification";
    case OutputKind::Regression: return "regression";
    case OutputKind::Discriminator: return "discriminator";
    case OutputKind::Generator: return "generator";
    case OutputKind::LatentHead: return "latent";
  }
  return "?";
}

struct NetworkConfig {
  std::string name;
  Shape input;
  std::vector<LayerSpec> layers;
  OutputKind output_kind = OutputKind::Regression;
  std::map<std::string, std::string> settings;

  const LayerSpec& output_layer() const { return layers.back(); }
  std::size_t output_units() const { return layers.empty() ? input.size() : layers.back().out_shape.size(); }
};

namespace detail {

inline Shape parse_shape(const std::string& s, int line) {
  Shape sh;
  char x1 = 0, x2 = 0;
  std::istringstream is(s);
  if (!(is >> sh.depth >> x1 >> sh.width >> x2 >> sh.height) || x1 != 'x' || x2 != 'x' || sh.depth <= 0 ||
      sh.width <= 0 || sh.height <= 0)
    throw ConfigError("config line " + std::to_string(line) + ": bad shape '" + s + "'");
  return sh;
}

inline int parse_int_col(const std::string& s, int line) {
  if (s == "-") return 0;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
}

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// Resolves input shapes along the chain and checks every declared output
/// shape against the convolution arithmetic. Throws ConfigError naming the
/// offending layer index (0 = first layer after the input).
inline void resolve_shapes(NetworkConfig& cfg) {
  if (cfg.layers.empty()) throw ConfigError("network has no layers");
  Shape prev = cfg.input;
  int outputs = 0;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    auto& l = cfg.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    if (l.kind == LayerKind::Output) ++outputs;
    const auto op = l.op();
    Shape in = prev;
    if (op == LayerKind::Conv2d || op == LayerKind::TransposedConv2d || op == LayerKind::AvgPool) {
      if (l.kernel <= 0 || l.stride <= 0) throw ConfigError(where + ": kernel and stride must be positive");
      if (prev.flat() && !l.out_shape.flat()) {
        // Reshape a flat vector into the spatial grid this layer needs.
        const int w = op == LayerKind::TransposedConv2d
                          ? tconv_in_extent(l.out_shape.width, l.kernel, l.padding, l.stride)
                          : conv_in_extent(l.out_shape.width, l.kernel, l.padding, l.stride);
        const int h = op == LayerKind::TransposedConv2d
                          ? tconv_in_extent(l.out_shape.height, l.kernel, l.padding, l.stride)
                          : conv_in_extent(l.out_shape.height, l.kernel, l.padding, l.stride);
        if (w <= 0 || h <= 0 || prev.size() % (static_cast<std::size_t>(w) * h) != 0)
          throw ConfigError(where + ": cannot reshape " + std::to_string(prev.size()) + " units into a grid for " +
                            to_string(l.out_shape));
        in = Shape{static_cast<int>(prev.size() / (static_cast<std::size_t>(w) * h)), w, h};
      }
    }
    l.in_shape = in;
    const Shape expect = infer_out_shape(l);
    if (expect != l.out_shape)
      throw ConfigError(where + ": declared shape " + to_string(l.out_shape) + " but " + to_string(in) +
                        " with K=" + std::to_string(l.kernel) + " P=" + std::to_string(l.padding) +
                        " S=" + std::to_string(l.stride) + " gives " + to_string(expect));
    if ((op == LayerKind::FullyConnected) && !l.out_shape.flat() && l.kind != LayerKind::Output)
      throw ConfigError(where + ": fully connected output must be Nx1x1");
    prev = l.out_shape;
  }
  if (outputs != 1) throw ConfigError("network must have exactly one output layer, found " + std::to_string(outputs));
  if (cfg.layers.back().kind != LayerKind::Output) throw ConfigError("the output layer must be last");
}

inline NetworkConfig parse_config(const std::string& text) {
  NetworkConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  bool have_input = false;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string& kind = tok[0];
    const std::string at = "config line " + std::to_string(line);
    if (kind == "name") {
      cfg.name = tok.size() > 1 ? tok[1] : "";
      continue;
    }
    if (kind == "head") {
      if (tok.size() < 2) throw ConfigError(at + ": head needs a kind");
      const auto& h = tok[1];
      if (h == "classification") cfg.output_kind = OutputKind::Classification;
      else if (h == "regression") cfg.output_kind = OutputKind::Regression;
      else if (h == "discriminator") cfg.output_kind = OutputKind::Discriminator;
      else if (h == "generator") cfg.output_kind = OutputKind::Generator;
      else if (h == "latent") cfg.output_kind = OutputKind::LatentHead;
      else throw ConfigError(at + ": unknown head '" + h + "'");
      continue;
    }
    if (kind == "set") {
      if (tok.size() != 3) throw ConfigError(at + ": expected 'set <key> <value>'");
      cfg.settings[tok[1]] = tok[2];
      continue;
    }
    if (kind == "input") {
      if (tok.size() < 2) throw ConfigError(at + ": input needs a shape");
      cfg.input = detail::parse_shape(tok[1], line);
      have_input = true;
      continue;
    }
    if (!have_input) throw ConfigError(at + ": layer row before the input row");
    LayerSpec l;
    if (kind == "fc") l.kind = LayerKind::FullyConnected;
    else if (kind == "conv") l.kind = LayerKind::Conv2d;
    else if (kind == "tconv") l.kind = LayerKind::TransposedConv2d;
    else if (kind == "avgpool" || kind == "pool") l.kind = LayerKind::AvgPool;
    else if (kind == "layernorm") l.kind = LayerKind::LayerNorm;
    else if (kind == "batchnorm") l.kind = LayerKind::BatchNorm;
    else if (kind == "output") l.kind = LayerKind::Output;
    else if (kind == "output:conv") { l.kind = LayerKind::Output; l.output_op = LayerKind::Conv2d; }
    else if (kind == "output:tconv") { l.kind = LayerKind::Output; l.output_op = LayerKind::TransposedConv2d; }
    else throw ConfigError(at + ": unknown layer kind '" + kind + "'");
    if (tok.size() < 7) throw ConfigError(at + ": expected 'kind DxWxH K P S activation norm'");
    l.out_shape = detail::parse_shape(tok[1], line);
    l.kernel = detail::parse_int_col(tok[2], line);
    l.padding = detail::parse_int_col(tok[3], line);
    l.stride = tok[4] == "-" ? 1 : detail::parse_int_col(tok[4], line);
    l.activation = parse_activation(tok[5]);
    std::optional<LayerKind> norm;
    if (tok[6] == "layer") norm = LayerKind::LayerNorm;
    else if (tok[6] == "batch") norm = LayerKind::BatchNorm;
    else if (tok[6] != "-") throw ConfigError(at + ": unknown norm '" + tok[6] + "'");
    for (std::size_t t = 7; t < tok.size(); ++t) {
      if (tok[t].rfind("table=", 0) == 0) l.table_units = detail::parse_int_col(tok[t].substr(6), line);
      else if (tok[t] == "identity") l.identity_limit = true;
      else throw ConfigError(at + ": unknown option '" + tok[t] + "'");
    }
    cfg.layers.push_back(l);
    if (norm) {
      LayerSpec n;
      n.kind = *norm;
      n.out_shape = l.out_shape;
      cfg.layers.push_back(n);
    }
  }
  if (!have_input) throw ConfigError("config has no input row");
  resolve_shapes(cfg);
  return cfg;
}

inline std::string to_text(const NetworkConfig& cfg) {
  std::ostringstream os;
  if (!cfg.name.empty()) os << "name " << cfg.name << "\n";
  os << "head " << to_string(cfg.output_kind);
  os << "\n";
  os << "input " << to_string(cfg.input) << "\n";
  for (const auto& l : cfg.layers) {
    std::string kind = to_string(l.kind);
    if (l.kind == LayerKind::Output && l.output_op != LayerKind::FullyConnected) kind += ":" + to_string(l.output_op);
    const bool spatial = l.op() == LayerKind::Conv2d || l.op() == LayerKind::TransposedConv2d ||
                         l.op() == LayerKind::AvgPool;
    os << kind << " " << to_string(l.out_shape) << " ";
    if (spatial) os << l.kernel << " " << l.padding << " " << l.stride;
    else os << "- - -";
    os << " " << to_string(l.activation) << " -";
    if (l.table_units) os << " table=" << l.table_units;
    if (l.identity_limit) os << " identity";
    os << "\n";
  }
  for (const auto& [k, v] : cfg.settings) os << "set " << k << " " << v << "\n";
  return os.str();
}

inline uint64_t config_hash(const NetworkConfig& cfg) { return detail::fnv1a(to_text(cfg)); }

inline NetworkConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  auto cfg = parse_config(ss.str());
  if (cfg.name.empty()) cfg.name = path;
  return cfg;
}

/// Inserts a normalization layer after every hidden conv / fully connected
/// layer (before any pooling that follows it).
inline NetworkConfig with_normalization(NetworkConfig cfg, std::optional<LayerKind> norm, bool identity_limit = false) {
  if (!norm) return cfg;
  std::vector<LayerSpec> out;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    out.push_back(l);
    const bool hidden = l.kind == LayerKind::FullyConnected || l.kind == LayerKind::Conv2d;
    const bool already = i + 1 < cfg.layers.size() && cfg.layers[i + 1].is_norm();
    if (hidden && !already) {
      LayerSpec n;
      n.kind = *norm;
      n.out_shape = l.out_shape;
      n.identity_limit = identity_limit;
      out.push_back(n);
    }
  }
  cfg.layers = std::move(out);
  resolve_shapes(cfg);
  return cfg;
}

}  // namespace tagi
