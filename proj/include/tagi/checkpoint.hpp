#pragma once

// Binary checkpoints. Layout (all integers little-endian):
//
//   "TAGICKPT"  u32 version  u64 hash of all config texts  u32 network count
//   per network:  u64 config hash  u32 layer count
//     per layer:  u8 scalar size (4 or 8)
//                 u64 n_w  w.mean[n_w]  w.var[n_w]  u64 n_b  b.mean[n_b]  b.var[n_b]

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tagi/config.hpp"
#include "tagi/error.hpp"
#include "tagi/params.hpp"

namespace tagi {

inline constexpr char kCheckpointMagic[8] = {'T', 'A', 'G', 'I', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class LeWriter {
 public:
  explicit LeWriter(std::ostream& os) : os_(os) {}
  template <typename U>
  void put(U v) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    os_.write(reinterpret_cast<const char*>(b), sizeof(U));
  }
  template <typename T>
  void array(const std::vector<T>& v) {
    for (T x : v) put(x);
  }

 private:
  std::ostream& os_;
};

class LeReader {
 public:
  LeReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}
  template <typename U>
  U get() {
    unsigned char b[sizeof(U)];
    if (!is_.read(reinterpret_cast<char*>(b), sizeof(U))) throw DataError(what_ + ": truncated checkpoint");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    U v;
    std::memcpy(&v, b, sizeof(U));
    return v;
  }
  template <typename T>
  std::vector<T> array(std::uint64_t n, std::uint8_t scalar) {
    if (n > (std::uint64_t(1) << 34)) throw DataError(what_ + ": implausible array length");
    std::vector<T> v(n);
    for (auto& x : v) x = scalar == 4 ? static_cast<T>(get<float>()) : static_cast<T>(get<double>());
    return v;
  }

 private:
  std::istream& is_;
  std::string what_;
};

inline std::uint64_t combined_hash(const std::vector<const NetworkConfig*>& cfgs) {
  std::string all;
  for (const auto* c : cfgs) all += to_text(*c);
  return fnv1a(all);
}

}  // namespace detail

template <typename T>
struct CheckpointEntry {
  const NetworkConfig* config;
  const ParameterStore<T>* params;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry<T>>& nets) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint '" + path.string() + "'");
  detail::LeWriter w(f);
  f.write(kCheckpointMagic, 8);
  w.put(kCheckpointVersion);
  std::vector<const NetworkConfig*> cfgs;
  for (const auto& n : nets) cfgs.push_back(n.config);
  w.put(detail::combined_hash(cfgs));
  w.put(static_cast<std::uint32_t>(nets.size()));
  for (const auto& n : nets) {
    w.put(config_hash(*n.config));
    w.put(static_cast<std::uint32_t>(n.params->layers.size()));
    for (const auto& l : n.params->layers) {
      w.put(static_cast<std::uint8_t>(sizeof(T)));
      w.put(static_cast<std::uint64_t>(l.w.size()));
      w.array(l.w.mean);
      w.array(l.w.var);
      w.put(static_cast<std::uint64_t>(l.b.size()));
      w.array(l.b.mean);
      w.array(l.b.var);
    }
  }
  if (!f) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

/// Reads parameter stores for the given configs. The config hashes must
/// match; values saved in either precision are converted to T.
template <typename T>
std::vector<ParameterStore<T>> load_checkpoint(const std::filesystem::path& path,
                                               const std::vector<const NetworkConfig*>& cfgs) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path.string() + "'");
  const std::string what = path.string();
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError(what + ": not a checkpoint");
  detail::LeReader r(f, what);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
  if (r.get<std::uint64_t>() != detail::combined_hash(cfgs))
    throw ConfigError(what + ": checkpoint was written for a different network configuration");
  const auto count = r.get<std::uint32_t>();
  if (count != cfgs.size())
    throw ConfigError(what + ": checkpoint holds " + std::to_string(count) + " networks, expected " +
                      std::to_string(cfgs.size()));
  std::vector<ParameterStore<T>> out(count);
  for (std::size_t n = 0; n < count; ++n) {
    if (r.get<std::uint64_t>() != config_hash(*cfgs[n])) throw ConfigError(what + ": config hash mismatch");
    const auto layers = r.get<std::uint32_t>();
    if (layers != cfgs[n]->layers.size()) throw ConfigError(what + ": layer count mismatch");
    out[n].layers.resize(layers);
    for (std::size_t i = 0; i < layers; ++i) {
      const auto scalar = r.get<std::uint8_t>();
      if (scalar != 4 && scalar != 8) throw DataError(what + ": bad scalar size");
      auto& l = out[n].layers[i];
      const auto nw = r.get<std::uint64_t>();
      l.w.mean = r.template array<T>(nw, scalar);
      l.w.var = r.template array<T>(nw, scalar);
      const auto nb = r.get<std::uint64_t>();
      l.b.mean = r.template array<T>(nb, scalar);
      l.b.var = r.template array<T>(nb, scalar);
      const auto& spec = cfgs[n]->layers[i];
      const std::size_t ew = spec.has_params() ? spec.weight_count() : 0, eb = spec.has_params() ? spec.bias_count() : 0;
      if (nw != ew || nb != eb) throw ConfigError(what + ": parameter count mismatch in layer " + std::to_string(i));
    }
  }
  return out;
}

}  // namespace tagi
