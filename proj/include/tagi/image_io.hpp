#pragma once

// 8-bit image files: binary PGM/PPM always, PNG when built with libpng
// (TAGI_HAVE_PNG). Pixels are interleaved in memory ([y][x][c]).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "tagi/data.hpp"
#include "tagi/error.hpp"

#ifdef TAGI_HAVE_PNG
#include <png.h>
#endif

namespace tagi {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 or 3
  std::vector<std::uint8_t> px;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), px(static_cast<std::size_t>(w) * h * c, fill) {}
  std::uint8_t& at(int x, int y, int c) { return px[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c) const { return px[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

inline bool png_supported() {
#ifdef TAGI_HAVE_PNG
  return true;
#else
  return false;
#endif
}

inline void write_pnm(const std::filesystem::path& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
}

inline Image read_pnm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  std::string magic;
  f >> magic;
  if (magic != "P5" && magic != "P6") throw DataError(path.string() + ": not a binary PGM/PPM file");
  auto next_int = [&]() {
    int v = 0;
    while (f >> std::ws && f.peek() == '#') f.ignore(1 << 20, '\n');
    if (!(f >> v)) throw DataError(path.string() + ": bad header");
    return v;
  };
  const int w = next_int(), h = next_int(), maxv = next_int();
  if (maxv != 255 || w <= 0 || h <= 0) throw DataError(path.string() + ": only 8-bit images are supported");
  f.get();
  Image img(w, h, magic == "P6" ? 3 : 1);
  f.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.px.size())) throw DataError(path.string() + ": truncated");
  return img;
}

#ifdef TAGI_HAVE_PNG
inline void write_png(const std::filesystem::path& path, const Image& img) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw DataError("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) throw DataError("libpng: out of memory");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng: failed writing '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, img.px.data() + static_cast<std::size_t>(y) * img.width * img.channels);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Image read_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!fp) throw DataError("cannot open '" + path.string() + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) throw DataError("libpng: out of memory");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng: failed reading '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int ch = png_get_channels(png, info);
  Image img(static_cast<int>(png_get_image_width(png, info)), static_cast<int>(png_get_image_height(png, info)),
            ch == 3 ? 3 : 1);
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path.string() + ": unsupported channel count");
  }
  for (int y = 0; y < img.height; ++y)
    png_read_row(png, img.px.data() + static_cast<std::size_t>(y) * img.width * img.channels, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}
#endif

/// Writes PNG for a .png path when available, otherwise PGM/PPM. Returns the
/// path actually written.
inline std::filesystem::path write_image(std::filesystem::path path, const Image& img) {
#ifdef TAGI_HAVE_PNG
  if (path.extension() == ".png") {
    write_png(path, img);
    return path;
  }
#endif
  if (path.extension() == ".png" || path.extension().empty()) path.replace_extension(img.channels == 3 ? ".ppm" : ".pgm");
  write_pnm(path, img);
  return path;
}

inline Image read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
#ifdef TAGI_HAVE_PNG
  if (ext == ".png") return read_png(path);
#endif
  throw DataError("unsupported image format '" + path.string() + "'");
}

/// Loads every readable image in a directory (sorted by file name). All
/// images must already have the requested size; resizing is done offline.
inline ImageDataset load_image_dir(const DatasetSpec& spec, Shape shape) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(spec.root)) throw DataError("'" + spec.root + "' is not a directory");
  for (const auto& e : std::filesystem::directory_iterator(spec.root)) {
    const auto ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || (png_supported() && ext == ".png")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no images found in '" + spec.root + "'");
  ImageDataset d;
  d.shape = shape;
  const std::size_t plane = shape.plane();
  for (const auto& f : files) {
    const Image img = read_image(f);
    if (img.width != shape.width || img.height != shape.height || img.channels != shape.depth)
      throw DataError(f.string() + ": expected " + to_string(shape) + " (channels x width x height)");
    const std::size_t base = d.pixels.size();
    d.pixels.resize(base + shape.size());
    for (int c = 0; c < img.channels; ++c)
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          d.pixels[base + c * plane + static_cast<std::size_t>(y) * shape.width + x] = img.at(x, y, c);
  }
  d.norm = fit_normalizer(d, spec.preprocessing);
  return d;
}

/// Tiles planar images (values already in [0, 255]) into a rows x cols grid
/// with a one-pixel border.
inline Image tile_images(const std::vector<std::vector<double>>& images, Shape shape, std::size_t cols) {
  if (images.empty() || cols == 0) throw PreconditionError("tile_images: nothing to tile");
  const std::size_t rows = (images.size() + cols - 1) / cols;
  const int w = shape.width, h = shape.height, ch = shape.depth == 3 ? 3 : 1;
  Image out(static_cast<int>(cols) * (w + 1) + 1, static_cast<int>(rows) * (h + 1) + 1, ch, 0);
  const std::size_t plane = shape.plane();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const int ox = static_cast<int>(i % cols) * (w + 1) + 1, oy = static_cast<int>(i / cols) * (h + 1) + 1;
    for (int c = 0; c < ch; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double v = images[i][c * plane + static_cast<std::size_t>(y) * w + x];
          out.at(ox + x, oy + y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
  }
  return out;
}

}  // namespace tagi
