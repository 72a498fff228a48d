#pragma once

// Grayscale image container plus PGM I/O, symmetric padding and PSNR.
//
// Pixels are doubles in row-major order; intensities are nominally in [0, 1]
// but nothing in the container enforces that (filter responses and wavelet
// detail planes are stored in the same type).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace irstd {

class PgmError : public std::runtime_error {
 public:
  PgmError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // row-major, height * width entries

  GrayImage() = default;
  GrayImage(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(checked_size(h, w), fill) {}

  double& at(int y, int x) { return pixels[std::size_t(y) * width + x]; }
  double at(int y, int x) const { return pixels[std::size_t(y) * width + x]; }

  bool same_shape(const GrayImage& o) const {
    return height == o.height && width == o.width;
  }

 private:
  // Validates before the pixel vector is sized, so a negative dimension can
  // never turn into a huge unsigned allocation.
  static std::size_t checked_size(int h, int w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("GrayImage: dimensions must be positive");
    return std::size_t(h) * std::size_t(w);
  }
};

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

namespace detail {

// Skips whitespace and '#' comments, returns the next token.  offset tracks
// the absolute byte position for error reporting.
inline std::string next_pgm_token(const std::string& bytes, std::size_t& offset) {
  const std::size_t n = bytes.size();
  while (offset < n) {
    const char c = bytes[offset];
    if (c == '#') {
      while (offset < n && bytes[offset] != '\n') ++offset;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v') {
      ++offset;
    } else {
      break;
    }
  }
  if (offset >= n) throw PgmError("unexpected end of header", offset);
  const std::size_t start = offset;
  while (offset < n) {
    const char c = bytes[offset];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v' || c == '#') break;
    ++offset;
  }
  return bytes.substr(start, offset - start);
}

inline long parse_pgm_int(const std::string& bytes, std::size_t& offset, const char* field) {
  const std::size_t at = offset;
  const std::string tok = next_pgm_token(bytes, offset);
  long value = 0;
  for (char c : tok) {
    if (c < '0' || c > '9')
      throw PgmError(std::string("invalid ") + field + " '" + tok + "'", at);
    value = value * 10 + (c - '0');
    if (value > 1'000'000'000L) throw PgmError(std::string(field) + " out of range", at);
  }
  if (tok.empty()) throw PgmError(std::string("missing ") + field, at);
  return value;
}

}  // namespace detail

// Reads a P2 (ASCII) or P5 (binary) PGM.  maxval up to 65535 is accepted;
// two-byte samples are big-endian per the format.  Pixels are normalized to
// [0, 1] by maxval.  Malformed input throws PgmError naming the byte offset.
inline GrayImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t offset = 0;
  const std::string magic = detail::next_pgm_token(bytes, offset);
  if (magic != "P2" && magic != "P5") throw PgmError("bad magic '" + magic + "'", 0);
  const bool binary = magic == "P5";

  const long width = detail::parse_pgm_int(bytes, offset, "width");
  const long height = detail::parse_pgm_int(bytes, offset, "height");
  const long maxval = detail::parse_pgm_int(bytes, offset, "maxval");
  if (width <= 0 || height <= 0) throw PgmError("non-positive dimensions", offset);
  if (maxval <= 0 || maxval > 65535) throw PgmError("maxval out of range", offset);

  GrayImage img{int(height), int(width)};
  const std::size_t count = std::size_t(height) * std::size_t(width);

  if (binary) {
    // Exactly one whitespace byte separates the header from the payload.
    if (offset >= bytes.size()) throw PgmError("missing payload", offset);
    ++offset;
    const int bytes_per = maxval > 255 ? 2 : 1;
    if (bytes.size() - offset < count * bytes_per)
      throw PgmError("truncated payload", bytes.size());
    for (std::size_t i = 0; i < count; ++i) {
      unsigned value;
      if (bytes_per == 1) {
        value = static_cast<unsigned char>(bytes[offset + i]);
      } else {
        value = (static_cast<unsigned char>(bytes[offset + 2 * i]) << 8) |
                static_cast<unsigned char>(bytes[offset + 2 * i + 1]);
      }
      if (long(value) > maxval) throw PgmError("sample exceeds maxval", offset + i * bytes_per);
      img.pixels[i] = double(value) / double(maxval);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const long v = detail::parse_pgm_int(bytes, offset, "sample");
      if (v > maxval) throw PgmError("sample exceeds maxval", offset);
      img.pixels[i] = double(v) / double(maxval);
    }
  }
  return img;
}

// Writes binary P5 with maxval 255.  Values are clamped to [0, 1] and rounded
// to the nearest level, so a save/load round trip moves a pixel by at most
// 1/510.
inline void save_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::string payload(img.pixels.size(), '\0');
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    payload[i] = char(static_cast<unsigned char>(std::lround(clamp01(img.pixels[i]) * 255.0)));
  }
  out.write(payload.data(), std::streamsize(payload.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

// Mirror index without edge duplication: ..., 2, 1, 0 | 1, 2, ... maps -1 to 1
// and n to n-2.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// Symmetric (whole-sample mirror) padding by r on every side.
inline GrayImage pad_symmetric(const GrayImage& img, int r) {
  if (r < 0) throw std::invalid_argument("pad_symmetric: negative radius");
  if (r > img.height - 1 || r > img.width - 1)
    throw std::invalid_argument("pad_symmetric: radius exceeds image extent");
  GrayImage out(img.height + 2 * r, img.width + 2 * r);
  for (int y = 0; y < out.height; ++y) {
    const int sy = reflect_index(y - r, img.height);
    for (int x = 0; x < out.width; ++x) {
      out.at(y, x) = img.at(sy, reflect_index(x - r, img.width));
    }
  }
  return out;
}

// PSNR in dB against peak 1.0; identical images give +infinity.
inline double psnr(const GrayImage& a, const GrayImage& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    se += d * d;
  }
  const double mse = se / double(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace irstd
