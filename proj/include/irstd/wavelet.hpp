#pragma once

// Single-level undecimated wavelet frame with the 2-tap pair
//   low  {1/2, 1/2}
//   high {1/2, -1/2}
// applied separably by correlation; the boundary rule is whole-sample
// mirroring (no edge duplication), matching pad_symmetric.
//
// The pair satisfies |H(w)|^2 + |G(w)|^2 = 1, so the four undecimated bands
// form a tight frame.  Two distinct "inverse-like" operators are provided:
//
//   band_adjoint  — the exact matrix transpose of band_filter, including the
//                   boundary fold-back.  This is the operator gradient flows
//                   need: <band_filter(u), v> == <u, band_adjoint(v)> holds to
//                   rounding for every u, v.
//
//   synthesize    — perfect reconstruction.  It convolves each band with the
//                   time-reversed kernel under the band extension implied by
//                   the mirror rule (symmetric for low-pass bands along each
//                   axis, antisymmetric for high-pass ones), which makes
//                   synthesize(analyze(u)) == u exact everywhere including
//                   borders.
//
// The two coincide in the interior but differ on the one-pixel border ring:
// mirroring makes boundary analysis rows non-orthonormal, so the plain
// transpose is not the inverse there.

#include <stdexcept>

#include "irstd/image.hpp"

namespace irstd::wavelet {

enum class Band { LL, LH, HL, HH };

// Naming: first letter is the kernel along x (within a row), second along y.
struct WaveletBands {
  GrayImage ll, lh, hl, hh;
};

inline constexpr double kLow[2] = {0.5, 0.5};
inline constexpr double kHigh[2] = {0.5, -0.5};

namespace detail {

inline void require_shape(const GrayImage& img) {
  if (img.height < 2 || img.width < 2)
    throw std::invalid_argument("wavelet: image must be at least 2x2");
}

// Correlation along x: out(y,x) = k0*u(y,x) + k1*u(y, mirror(x+1)).
inline GrayImage filter_rows(const GrayImage& u, const double k[2]) {
  GrayImage out(u.height, u.width);
  for (int y = 0; y < u.height; ++y) {
    for (int x = 0; x < u.width; ++x) {
      const int xn = x + 1 < u.width ? x + 1 : u.width - 2;
      out.at(y, x) = k[0] * u.at(y, x) + k[1] * u.at(y, xn);
    }
  }
  return out;
}

inline GrayImage filter_cols(const GrayImage& u, const double k[2]) {
  GrayImage out(u.height, u.width);
  for (int y = 0; y < u.height; ++y) {
    const int yn = y + 1 < u.height ? y + 1 : u.height - 2;
    for (int x = 0; x < u.width; ++x) {
      out.at(y, x) = k[0] * u.at(y, x) + k[1] * u.at(yn, x);
    }
  }
  return out;
}

// Exact transposes of the two filters: contributions are folded back onto the
// same source indices the forward pass read from.
inline GrayImage adjoint_rows(const GrayImage& v, const double k[2]) {
  GrayImage out(v.height, v.width, 0.0);
  for (int y = 0; y < v.height; ++y) {
    for (int x = 0; x < v.width; ++x) {
      const int xn = x + 1 < v.width ? x + 1 : v.width - 2;
      out.at(y, x) += k[0] * v.at(y, x);
      out.at(y, xn) += k[1] * v.at(y, x);
    }
  }
  return out;
}

inline GrayImage adjoint_cols(const GrayImage& v, const double k[2]) {
  GrayImage out(v.height, v.width, 0.0);
  for (int y = 0; y < v.height; ++y) {
    const int yn = y + 1 < v.height ? y + 1 : v.height - 2;
    for (int x = 0; x < v.width; ++x) {
      out.at(y, x) += k[0] * v.at(y, x);
      out.at(yn, x) += k[1] * v.at(y, x);
    }
  }
  return out;
}

// Reconstruction convolution along x: out(y,x) = k0*p(y,x) + k1*p~(y,x-1),
// where the band extension p~(y,-1) is +p(y,0) for a symmetric (low) band and
// -p(y,0) for an antisymmetric (high) band.
inline GrayImage pr_rows(const GrayImage& p, const double k[2], double sign) {
  GrayImage out(p.height, p.width);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      const double prev = x > 0 ? p.at(y, x - 1) : sign * p.at(y, 0);
      out.at(y, x) = k[0] * p.at(y, x) + k[1] * prev;
    }
  }
  return out;
}

inline GrayImage pr_cols(const GrayImage& p, const double k[2], double sign) {
  GrayImage out(p.height, p.width);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      const double prev = y > 0 ? p.at(y - 1, x) : sign * p.at(0, x);
      out.at(y, x) = k[0] * p.at(y, x) + k[1] * prev;
    }
  }
  return out;
}

struct BandSpec {
  const double* kx;
  const double* ky;
  bool high_x;
  bool high_y;
};

inline BandSpec band_spec(Band b) {
  switch (b) {
    case Band::LL: return {kLow, kLow, false, false};
    case Band::LH: return {kLow, kHigh, false, true};
    case Band::HL: return {kHigh, kLow, true, false};
    case Band::HH: return {kHigh, kHigh, true, true};
  }
  throw std::invalid_argument("wavelet: unknown band");
}

}  // namespace detail

// One frame coefficient plane, same size as the input.
inline GrayImage band_filter(const GrayImage& u, Band b) {
  detail::require_shape(u);
  const auto spec = detail::band_spec(b);
  return detail::filter_cols(detail::filter_rows(u, spec.kx), spec.ky);
}

// Exact transpose of band_filter (forward = cols after rows, so the adjoint
// undoes cols first).
inline GrayImage band_adjoint(const GrayImage& v, Band b) {
  detail::require_shape(v);
  const auto spec = detail::band_spec(b);
  return detail::adjoint_rows(detail::adjoint_cols(v, spec.ky), spec.kx);
}

inline WaveletBands analyze(const GrayImage& u) {
  detail::require_shape(u);
  const GrayImage lo = detail::filter_rows(u, kLow);
  const GrayImage hi = detail::filter_rows(u, kHigh);
  WaveletBands bands;
  bands.ll = detail::filter_cols(lo, kLow);
  bands.lh = detail::filter_cols(lo, kHigh);
  bands.hl = detail::filter_cols(hi, kLow);
  bands.hh = detail::filter_cols(hi, kHigh);
  return bands;
}

// Perfect reconstruction; exact (to rounding) for bands produced by analyze.
inline GrayImage synthesize(const WaveletBands& bands) {
  detail::require_shape(bands.ll);
  if (!bands.ll.same_shape(bands.lh) || !bands.ll.same_shape(bands.hl) ||
      !bands.ll.same_shape(bands.hh))
    throw std::invalid_argument("synthesize: band shape mismatch");

  const Band order[4] = {Band::LL, Band::LH, Band::HL, Band::HH};
  const GrayImage* planes[4] = {&bands.ll, &bands.lh, &bands.hl, &bands.hh};

  GrayImage out(bands.ll.height, bands.ll.width, 0.0);
  for (int i = 0; i < 4; ++i) {
    const auto spec = detail::band_spec(order[i]);
    GrayImage part = detail::pr_cols(*planes[i], spec.ky, spec.high_y ? -1.0 : 1.0);
    part = detail::pr_rows(part, spec.kx, spec.high_x ? -1.0 : 1.0);
    for (std::size_t j = 0; j < out.pixels.size(); ++j) out.pixels[j] += part.pixels[j];
  }
  return out;
}

}  // namespace irstd::wavelet
