#pragma once

// Perona-Malik diffusion, in two realizations sharing one set of parameters:
//
//   pmd_step_fd  — classical explicit step on forward differences with a
//                  Neumann (zero-difference) far edge.  The divergence is the
//                  exact negated adjoint of the difference operator, so each
//                  step is one projected gradient-descent step on pm_energy.
//
//   wpmd_step    — the same flow driven through the undecimated wavelet
//                  frame: the LH/HL detail planes play the role of the
//                  gradient, are attenuated by the diffusivity, and are
//                  pushed back through the exact band adjoints.
//
// Both steps clamp the result to [0, 1] (projection onto the intensity box).
//
// Note on step sizes: the wavelet detail operators have norm <= 1, so the
// wavelet flow is well behaved at gamma <= 1.  The finite-difference operator
// norm is close to 8, so pmd_step_fd wants gamma around 1/4 or smaller; the
// shipped default gamma applies to the wavelet flow.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "irstd/image.hpp"
#include "irstd/wavelet.hpp"

namespace irstd::diffusion {

struct DiffusionParams {
  double k = 0.1;      // contrast scale of the diffusivity
  double gamma = 1.0;  // step size
  int steps = 4;       // cascade depth used by pipelines
};

// g(s) = 1 / (1 + s^2/k^2); g(0) = 1, g(k) = 1/2, monotone to 0.
inline double diffusivity(double s, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("diffusivity: k must be positive");
  return 1.0 / (1.0 + (s * s) / (k * k));
}

namespace detail {

// Forward differences; the difference past the last sample of an axis is 0
// (replicated edge), the classical Neumann discretization.
inline void forward_diffs(const GrayImage& u, GrayImage& dx, GrayImage& dy) {
  for (int y = 0; y < u.height; ++y) {
    for (int x = 0; x < u.width; ++x) {
      dx.at(y, x) = x + 1 < u.width ? u.at(y, x + 1) - u.at(y, x) : 0.0;
      dy.at(y, x) = y + 1 < u.height ? u.at(y + 1, x) - u.at(y, x) : 0.0;
    }
  }
}

// u <- clamp01(u - gamma * (Dx^T fx + Dy^T fy)); the fold-back loops are the
// exact transpose of forward_diffs, i.e. backward differences of the fluxes.
inline GrayImage apply_neg_adjoint_step(const GrayImage& u, const GrayImage& fx,
                                        const GrayImage& fy, double gamma) {
  GrayImage grad(u.height, u.width, 0.0);
  for (int y = 0; y < u.height; ++y) {
    for (int x = 0; x < u.width; ++x) {
      if (x + 1 < u.width) {
        grad.at(y, x + 1) += fx.at(y, x);
        grad.at(y, x) -= fx.at(y, x);
      }
      if (y + 1 < u.height) {
        grad.at(y + 1, x) += fy.at(y, x);
        grad.at(y, x) -= fy.at(y, x);
      }
    }
  }
  GrayImage out(u.height, u.width);
  for (std::size_t i = 0; i < u.pixels.size(); ++i) {
    out.pixels[i] = clamp01(u.pixels[i] - gamma * grad.pixels[i]);
  }
  return out;
}

}  // namespace detail

// Perona-Malik energy: sum over pixels of (k^2/2) * ln(1 + |grad u|^2 / k^2)
// under the same forward-difference convention as pmd_step_fd, so that step
// is exactly gradient descent on this functional (before the clamp).
inline double pm_energy(const GrayImage& u, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("pm_energy: k must be positive");
  GrayImage dx(u.height, u.width), dy(u.height, u.width);
  detail::forward_diffs(u, dx, dy);
  double e = 0.0;
  for (std::size_t i = 0; i < u.pixels.size(); ++i) {
    const double m2 = dx.pixels[i] * dx.pixels[i] + dy.pixels[i] * dy.pixels[i];
    e += 0.5 * k * k * std::log1p(m2 / (k * k));
  }
  return e;
}

// One explicit finite-difference Perona-Malik step.
inline GrayImage pmd_step_fd(const GrayImage& u, const DiffusionParams& p) {
  if (!(p.k > 0.0)) throw std::invalid_argument("pmd_step_fd: k must be positive");
  GrayImage dx(u.height, u.width), dy(u.height, u.width);
  detail::forward_diffs(u, dx, dy);
  GrayImage fx(u.height, u.width), fy(u.height, u.width);
  for (std::size_t i = 0; i < u.pixels.size(); ++i) {
    const double m = std::sqrt(dx.pixels[i] * dx.pixels[i] + dy.pixels[i] * dy.pixels[i]);
    const double g = diffusivity(m, p.k);
    fx.pixels[i] = g * dx.pixels[i];
    fy.pixels[i] = g * dy.pixels[i];
  }
  return detail::apply_neg_adjoint_step(u, fx, fy, p.gamma);
}

// Isotropic control: the same stencil with g == 1 (plain heat flow).
inline GrayImage heat_step_fd(const GrayImage& u, double gamma) {
  GrayImage dx(u.height, u.width), dy(u.height, u.width);
  detail::forward_diffs(u, dx, dy);
  return detail::apply_neg_adjoint_step(u, dx, dy, gamma);
}

// One wavelet-domain Perona-Malik step.  The modulus pairs LH with HL
// pointwise; HH and LL are untouched, so constant images are exact fixed
// points.
inline GrayImage wpmd_step(const GrayImage& u, const DiffusionParams& p) {
  if (!(p.k > 0.0)) throw std::invalid_argument("wpmd_step: k must be positive");
  using wavelet::Band;
  const GrayImage lh = wavelet::band_filter(u, Band::LH);
  const GrayImage hl = wavelet::band_filter(u, Band::HL);
  GrayImage flh(u.height, u.width), fhl(u.height, u.width);
  for (std::size_t i = 0; i < u.pixels.size(); ++i) {
    const double m = std::sqrt(lh.pixels[i] * lh.pixels[i] + hl.pixels[i] * hl.pixels[i]);
    const double g = diffusivity(m, p.k);
    flh.pixels[i] = g * lh.pixels[i];
    fhl.pixels[i] = g * hl.pixels[i];
  }
  const GrayImage alh = wavelet::band_adjoint(flh, Band::LH);
  const GrayImage ahl = wavelet::band_adjoint(fhl, Band::HL);
  GrayImage out(u.height, u.width);
  for (std::size_t i = 0; i < u.pixels.size(); ++i) {
    out.pixels[i] = clamp01(u.pixels[i] - p.gamma * (alh.pixels[i] + ahl.pixels[i]));
  }
  return out;
}

// n successive wpmd steps; element i holds the image after i+1 steps.
inline std::vector<GrayImage> wpmd_cascade(const GrayImage& u, const DiffusionParams& p, int n) {
  if (n < 1) throw std::invalid_argument("wpmd_cascade: need at least one level");
  std::vector<GrayImage> levels;
  levels.reserve(std::size_t(n));
  GrayImage cur = u;
  for (int i = 0; i < n; ++i) {
    cur = wpmd_step(cur, p);
    levels.push_back(cur);
  }
  return levels;
}

}  // namespace irstd::diffusion
