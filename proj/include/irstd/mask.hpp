#pragma once

// Binary mask shared by the detector, metric and scene-generation code.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "irstd/image.hpp"

namespace irstd {

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  BinaryMask() = default;
  BinaryMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), bits(checked_size(h, w), fill) {}

  std::uint8_t& at(int y, int x) { return bits[std::size_t(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return bits[std::size_t(y) * width + x]; }

  bool same_shape(const BinaryMask& o) const {
    return height == o.height && width == o.width;
  }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto b : bits) c += b;
    return c;
  }

  GrayImage to_image() const {
    GrayImage img(height, width);
    for (std::size_t i = 0; i < bits.size(); ++i) img.pixels[i] = bits[i] ? 1.0 : 0.0;
    return img;
  }

 private:
  // Validates before the bit vector is sized, so a negative dimension can
  // never turn into a huge unsigned allocation.
  static std::size_t checked_size(int h, int w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("BinaryMask: dimensions must be positive");
    return std::size_t(h) * std::size_t(w);
  }
};

// Thresholds an image at a strict cutoff: pixel > t becomes 1.
inline BinaryMask threshold_mask(const GrayImage& img, double t) {
  BinaryMask m(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = img.pixels[i] > t ? 1 : 0;
  return m;
}

}  // namespace irstd
