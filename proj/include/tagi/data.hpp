#pragma once

// Dataset ingestion: MNIST IDX files, CIFAR-10 binary batches and flat
// directories of small images. Pixels stay as bytes; a per-channel affine
// normalizer turns them into network inputs on demand.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tagi/error.hpp"
#include "tagi/layer_spec.hpp"

namespace tagi {

enum class Preprocessing {
  None,                   // x / 255
  UnitRangeMeanSubtract,  // x / 255 - mean
  Standardize,            // (x / 255 - mean) / std
};

/// Per-channel x' = (x / 255 - offset) * scale.
struct Normalizer {
  std::vector<double> offset;
  std::vector<double> scale;

  double apply(std::uint8_t px, std::size_t channel) const {
    return (static_cast<double>(px) / 255.0 - offset[channel]) * scale[channel];
  }
  /// Inverse mapping back to [0, 255], clamped.
  double to_pixel(double v, std::size_t channel) const {
    return std::clamp((v / scale[channel] + offset[channel]) * 255.0, 0.0, 255.0);
  }
};

struct ImageDataset {
  Shape shape;  // channels x width x height
  std::size_t num_classes = 0;
  std::vector<std::uint8_t> pixels;  // planar per image: [c][y][x]
  std::vector<std::uint8_t> labels;  // empty for unlabeled sets
  Normalizer norm;

  std::size_t size() const { return shape.size() ? pixels.size() / shape.size() : 0; }
  const std::uint8_t* image(std::size_t i) const { return pixels.data() + i * shape.size(); }

  template <typename T>
  void fill(std::size_t i, T* out) const {
    const std::size_t plane = shape.plane(), n = shape.size();
    const std::uint8_t* px = image(i);
    for (std::size_t k = 0; k < n; ++k) out[k] = static_cast<T>(norm.apply(px[k], k / plane));
  }
};

/// Channel statistics of x/255 over the whole set and the matching normalizer.
inline Normalizer fit_normalizer(const ImageDataset& d, Preprocessing p) {
  const std::size_t C = static_cast<std::size_t>(d.shape.depth), plane = d.shape.plane();
  Normalizer n{std::vector<double>(C, 0.0), std::vector<double>(C, 1.0)};
  if (p == Preprocessing::None || d.size() == 0) return n;
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::uint8_t* px = d.image(i);
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0, q = 0;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = px[c * plane + k] / 255.0;
        s += v;
        q += v * v;
      }
      sum[c] += s;
      sq[c] += q;
    }
  }
  const double count = static_cast<double>(d.size() * plane);
  for (std::size_t c = 0; c < C; ++c) {
    n.offset[c] = sum[c] / count;
    if (p == Preprocessing::Standardize) {
      const double var = std::max(sq[c] / count - n.offset[c] * n.offset[c], 0.0);
      n.scale[c] = var > 0 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }
  return n;
}

struct DatasetSpec {
  std::string name;  // mnist, cifar10, celeba32
  std::string root;
  Preprocessing preprocessing = Preprocessing::UnitRangeMeanSubtract;
  bool require_standard_size = true;  // 60000/10000 for MNIST, 50000/10000 for CIFAR-10
};

struct TrainTestSplit {
  ImageDataset train;
  ImageDataset test;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot open '" + p.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

inline std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}

inline std::filesystem::path find_file(const std::filesystem::path& root, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (std::filesystem::exists(root / n)) return root / n;
  }
  throw DataError("none of the expected files found under '" + root.string() + "' (first: " + *names.begin() + ")");
}

}  // namespace detail

/// IDX image file: magic 0x00000803, count, rows, cols, then bytes.
inline ImageDataset read_idx_images(const std::filesystem::path& path) {
  const auto buf = detail::read_file(path);
  if (buf.size() < 16) throw DataError(path.string() + ": truncated IDX header");
  if (detail::be32(buf.data()) != 0x00000803) throw DataError(path.string() + ": bad IDX image magic");
  const std::size_t n = detail::be32(buf.data() + 4), rows = detail::be32(buf.data() + 8),
                    cols = detail::be32(buf.data() + 12);
  if (buf.size() != 16 + n * rows * cols)
    throw DataError(path.string() + ": file length " + std::to_string(buf.size()) + " does not match header (" +
                    std::to_string(n) + " images of " + std::to_string(rows) + "x" + std::to_string(cols) + ")");
  ImageDataset d;
  d.shape = {1, static_cast<int>(cols), static_cast<int>(rows)};
  d.pixels.assign(buf.begin() + 16, buf.end());
  return d;
}

/// IDX label file: magic 0x00000801, count, then bytes.
inline std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto buf = detail::read_file(path);
  if (buf.size() < 8) throw DataError(path.string() + ": truncated IDX header");
  if (detail::be32(buf.data()) != 0x00000801) throw DataError(path.string() + ": bad IDX label magic");
  const std::size_t n = detail::be32(buf.data() + 4);
  if (buf.size() != 8 + n) throw DataError(path.string() + ": file length does not match label count");
  return std::vector<std::uint8_t>(buf.begin() + 8, buf.end());
}

inline void check_labels(const ImageDataset& d, const std::string& what) {
  if (d.labels.size() != d.size())
    throw DataError(what + ": " + std::to_string(d.size()) + " images but " + std::to_string(d.labels.size()) +
                    " labels");
  for (auto l : d.labels)
    if (l >= d.num_classes) throw DataError(what + ": label " + std::to_string(l) + " out of range");
}

/// Reads train and test splits from the standard file names (optionally
/// with .idx or -ubyte suffix variants). The normalizer is fitted on the
/// training set and shared with the test set.
inline TrainTestSplit load_mnist(const DatasetSpec& spec) {
  const std::filesystem::path root(spec.root);
  TrainTestSplit s;
  s.train = read_idx_images(detail::find_file(root, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"}));
  s.train.labels = read_idx_labels(detail::find_file(root, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"}));
  s.test = read_idx_images(detail::find_file(root, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"}));
  s.test.labels = read_idx_labels(detail::find_file(root, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"}));
  s.train.num_classes = s.test.num_classes = 10;
  check_labels(s.train, "mnist train");
  check_labels(s.test, "mnist test");
  if (spec.require_standard_size && (s.train.size() != 60000 || s.test.size() != 10000))
    throw DataError("mnist: expected 60000/10000 images, found " + std::to_string(s.train.size()) + "/" +
                    std::to_string(s.test.size()));
  s.train.norm = fit_normalizer(s.train, spec.preprocessing);
  s.test.norm = s.train.norm;
  return s;
}

inline constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

/// Appends the records of one CIFAR-10 binary batch file.
inline void read_cifar_batch(const std::filesystem::path& path, ImageDataset& d) {
  const auto buf = detail::read_file(path);
  if (buf.size() % kCifarRecord != 0)
    throw DataError(path.string() + ": length " + std::to_string(buf.size()) + " is not a multiple of the " +
                    std::to_string(kCifarRecord) + "-byte record");
  const std::size_t n = buf.size() / kCifarRecord;
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = buf.data() + r * kCifarRecord;
    d.labels.push_back(rec[0]);
    d.pixels.insert(d.pixels.end(), rec + 1, rec + kCifarRecord);
  }
}

/// One record in the on-disk layout: label byte then 3072 planar pixels.
inline std::array<std::uint8_t, kCifarRecord> cifar_record(const ImageDataset& d, std::size_t i) {
  std::array<std::uint8_t, kCifarRecord> rec{};
  rec[0] = d.labels.at(i);
  std::copy(d.image(i), d.image(i) + kCifarRecord - 1, rec.begin() + 1);
  return rec;
}

inline TrainTestSplit load_cifar10(const DatasetSpec& spec) {
  std::filesystem::path root(spec.root);
  if (std::filesystem::exists(root / "cifar-10-batches-bin")) root /= "cifar-10-batches-bin";
  TrainTestSplit s;
  s.train.shape = s.test.shape = {3, 32, 32};
  s.train.num_classes = s.test.num_classes = 10;
  for (int b = 1; b <= 5; ++b) read_cifar_batch(root / ("data_batch_" + std::to_string(b) + ".bin"), s.train);
  read_cifar_batch(root / "test_batch.bin", s.test);
  check_labels(s.train, "cifar10 train");
  check_labels(s.test, "cifar10 test");
  if (spec.require_standard_size && (s.train.size() != 50000 || s.test.size() != 10000))
    throw DataError("cifar10: expected 50000/10000 records, found " + std::to_string(s.train.size()) + "/" +
                    std::to_string(s.test.size()));
  s.train.norm = fit_normalizer(s.train, spec.preprocessing);
  s.test.norm = s.train.norm;
  return s;
}

/// Keeps the first n examples (all when n is 0 or larger than the set).
inline ImageDataset take(const ImageDataset& d, std::size_t n) {
  if (n == 0 || n >= d.size()) return d;
  ImageDataset o = d;
  o.pixels.resize(n * d.shape.size());
  if (!o.labels.empty()) o.labels.resize(n);
  return o;
}

}  // namespace tagi
