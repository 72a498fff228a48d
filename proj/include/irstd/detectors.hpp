#pragma once

// Classical small-target detectors: white Top-Hat and Max-Median, plus the
// adaptive mean + k*sigma binarization.  Both filters use whole-sample mirror
// padding at the borders, matching pad_symmetric.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "irstd/image.hpp"
#include "irstd/mask.hpp"

namespace irstd::detectors {

struct DetectorConfig {
  int radius = 1;        // Top-Hat structuring element radius (square side 2r+1)
  int window = 2;        // Max-Median half-length L (2L+1 samples per direction)
  double k_sigma = 5.0;  // threshold multiplier for mean + k*sigma
};

namespace detail {

enum class Extremum { Min, Max };

// Grayscale erosion (min) or dilation (max) with a square element of radius r.
inline GrayImage morph(const GrayImage& u, int r, Extremum which) {
  GrayImage out(u.height, u.width);
  for (int y = 0; y < u.height; ++y) {
    for (int x = 0; x < u.width; ++x) {
      double v = u.at(reflect_index(y - r, u.height), reflect_index(x - r, u.width));
      for (int dy = -r; dy <= r; ++dy) {
        const int sy = reflect_index(y + dy, u.height);
        for (int dx = -r; dx <= r; ++dx) {
          const double s = u.at(sy, reflect_index(x + dx, u.width));
          v = which == Extremum::Min ? std::min(v, s) : std::max(v, s);
        }
      }
      out.at(y, x) = v;
    }
  }
  return out;
}

inline double median_of(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];  // sample counts are odd (2L+1)
}

}  // namespace detail

inline GrayImage erode(const GrayImage& u, int r) {
  return detail::morph(u, r, detail::Extremum::Min);
}
inline GrayImage dilate(const GrayImage& u, int r) {
  return detail::morph(u, r, detail::Extremum::Max);
}

// White top-hat: img - opening(img).  Structures smaller than the (2r+1)^2
// element survive in the response; the response is non-negative because the
// opening never exceeds the image.
inline GrayImage top_hat(const GrayImage& u, int radius) {
  if (radius < 1) throw std::invalid_argument("top_hat: radius must be >= 1");
  if (2 * radius + 1 > u.height || 2 * radius + 1 > u.width)
    throw std::invalid_argument("top_hat: radius exceeds image half-extent");
  const GrayImage opened = dilate(erode(u, radius), radius);
  GrayImage out(u.height, u.width);
  for (std::size_t i = 0; i < u.pixels.size(); ++i) {
    out.pixels[i] = u.pixels[i] - opened.pixels[i];
  }
  return out;
}

// Max-Median: per pixel the median over 2L+1 samples along each of the four
// principal directions; the filtered value is the largest of the four
// medians, and the response is the positive part of img - filtered.
inline GrayImage max_median(const GrayImage& u, int L) {
  if (L < 1) throw std::invalid_argument("max_median: L must be >= 1");
  const int dirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  GrayImage out(u.height, u.width);
  std::vector<double> samples(std::size_t(2 * L + 1));
  for (int y = 0; y < u.height; ++y) {
    for (int x = 0; x < u.width; ++x) {
      double filtered = -std::numeric_limits<double>::infinity();
      for (const auto& d : dirs) {
        for (int t = -L; t <= L; ++t) {
          samples[std::size_t(t + L)] =
              u.at(reflect_index(y + t * d[0], u.height), reflect_index(x + t * d[1], u.width));
        }
        filtered = std::max(filtered, detail::median_of(samples));
      }
      const double r = u.at(y, x) - filtered;
      out.at(y, x) = r > 0.0 ? r : 0.0;
    }
  }
  return out;
}

// response > mean + k_sigma * stddev (population stddev).  A flat response
// has sigma 0 and the strict comparison keeps the mask empty.
inline BinaryMask threshold_adaptive(const GrayImage& response, double k_sigma) {
  if (!(k_sigma > 0.0)) throw std::invalid_argument("threshold_adaptive: k_sigma must be positive");
  double mean = 0.0;
  for (double v : response.pixels) mean += v;
  mean /= double(response.pixels.size());
  double var = 0.0;
  for (double v : response.pixels) var += (v - mean) * (v - mean);
  var /= double(response.pixels.size());
  return threshold_mask(response, mean + k_sigma * std::sqrt(var));
}

}  // namespace irstd::detectors
