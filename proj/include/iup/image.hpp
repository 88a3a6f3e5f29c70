#ifndef IUP_IMAGE_HPP
#define IUP_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace iup {

/// Planar RGB image, values in [0,1], channel-major (C,H,W) like the
/// tensors it feeds.
template <typename S>
struct Image {
  int width = 0, height = 0;
  std::vector<S> data;  // 3*H*W

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(3) * w * h, S(0)) {}

  S& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  S at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
};

inline uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

template <typename S>
void write_ppm(const std::string& path, const Image<S>& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * 3 + c] = to_byte(static_cast<double>(img.at(c, y, x)));
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

template <typename S>
Image<S> read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  int w, h, maxval;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported format in " + path);
  f.get();  // single whitespace after header
  Image<S> img(w, h);
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!f) throw std::runtime_error("read_ppm: truncated file " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<S>(row[static_cast<size_t>(x) * 3 + c]) / S(255);
  }
  return img;
}

/// 8-bit binary PGM, used for attention/feature visualizations.
template <typename S>
void write_pgm(const std::string& path, const std::vector<S>& gray, int width, int height) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
  f << "P5\n" << width << " " << height << "\n255\n";
  for (size_t i = 0; i < gray.size(); ++i) {
    const uint8_t b = to_byte(static_cast<double>(gray[i]));
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
}

}  // namespace iup

#endif
