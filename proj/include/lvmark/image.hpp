#pragma once

#include "lvmark/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace lvmark {

/// Grayscale frame with values in [0, 1], row-major.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<double> px;

  Image() = default;
  Image(int height, int width) : h(height), w(width), px(static_cast<std::size_t>(height) * width, 0.0) {}

  double& at(int r, int c) { return px[static_cast<std::size_t>(r) * w + c]; }
  double at(int r, int c) const { return px[static_cast<std::size_t>(r) * w + c]; }
};

namespace detail {

inline int pnm_next_int(std::istream& is) {
  // Skips whitespace and '#' comments between PNM header tokens.
  int c = is.peek();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else {
      is.get();
    }
    c = is.peek();
  }
  int value = -1;
  is >> value;
  return value;
}

}  // namespace detail

/// Reads an 8- or 16-bit binary PGM (P5), normalized by the max sample value.
inline Image read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image file: " + path.string());
  std::string magic(2, '\0');
  is.read(magic.data(), 2);
  if (magic != "P5") throw std::runtime_error("not a binary PGM (P5): " + path.string());
  const int w = detail::pnm_next_int(is);
  const int h = detail::pnm_next_int(is);
  const int maxval = detail::pnm_next_int(is);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw std::runtime_error("malformed PGM header: " + path.string());
  }
  is.get();  // single whitespace byte after maxval

  Image img(h, w);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (maxval < 256) {
    std::vector<std::uint8_t> raw(n);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("truncated PGM data: " + path.string());
    for (std::size_t i = 0; i < n; ++i) img.px[i] = raw[i] / static_cast<double>(maxval);
  } else {
    std::vector<std::uint8_t> raw(n * 2);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
    if (!is) throw std::runtime_error("truncated PGM data: " + path.string());
    for (std::size_t i = 0; i < n; ++i) {
      const int v = (raw[2 * i] << 8) | raw[2 * i + 1];  // big-endian per netpbm
      img.px[i] = v / static_cast<double>(maxval);
    }
  }
  return img;
}

inline void write_pgm(const Image& img, const std::filesystem::path& path,
                      int maxval = 65535) {
  require(maxval == 255 || maxval == 65535, "write_pgm: maxval must be 255 or 65535");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write image file: " + path.string());
  os << "P5\n" << img.w << ' ' << img.h << "\n" << maxval << "\n";
  const std::size_t n = img.px.size();
  auto quantize = [maxval](double v) {
    return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
  };
  if (maxval == 255) {
    std::vector<std::uint8_t> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = static_cast<std::uint8_t>(quantize(img.px[i]));
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(n));
  } else {
    std::vector<std::uint8_t> raw(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
      const int v = quantize(img.px[i]);
      raw[2 * i] = static_cast<std::uint8_t>(v >> 8);
      raw[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(n * 2));
  }
  if (!os) throw std::runtime_error("failed writing image: " + path.string());
}

/// RGB byte image, used for heatmap overlays.
struct RgbImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> px;  // 3 bytes per pixel

  RgbImage(int height, int width)
      : h(height), w(width), px(static_cast<std::size_t>(height) * width * 3, 0) {}

  std::uint8_t* at(int r, int c) { return &px[(static_cast<std::size_t>(r) * w + c) * 3]; }
};

inline void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write image file: " + path.string());
  os << "P6\n" << img.w << ' ' << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.px.data()),
           static_cast<std::streamsize>(img.px.size()));
  if (!os) throw std::runtime_error("failed writing image: " + path.string());
}

/// Bilinear resample with the pixel-center convention
/// src = (dst + 0.5) * in/out - 0.5, clamped at the borders.
inline Image resize_bilinear(const Image& img, int to_h, int to_w) {
  require(to_h > 0 && to_w > 0, "resize_bilinear: target size must be positive");
  if (to_h == img.h && to_w == img.w) return img;
  Image out(to_h, to_w);
  const double sy = static_cast<double>(img.h) / to_h;
  const double sx = static_cast<double>(img.w) / to_w;
  for (int r = 0; r < to_h; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.h - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double wy = fy - y0;
    for (int c = 0; c < to_w; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.w - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double wx = fx - x0;
      out.at(r, c) = (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
                     wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
    }
  }
  return out;
}

}  // namespace lvmark
