#pragma once

// Seeded synthetic infrared scenes: low-frequency cosine clutter, Gaussian
// point targets with closed-form half-peak ground truth, and white Gaussian
// noise.  Everything is drawn from one Rng in a fixed order, so a SceneSpec
// (seed included) reproduces a scene bit for bit.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "irstd/image.hpp"
#include "irstd/mask.hpp"
#include "irstd/rng.hpp"

namespace irstd::synth {

struct SceneSpec {
  int height = 64;
  int width = 64;
  int count_min = 1;
  int count_max = 3;
  double sigma_min = 1.6;  // target Gaussian sigma, pixels
  double sigma_max = 3.0;
  double amp_min = 0.35;  // target peak amplitude, intensity units
  double amp_max = 0.75;
  double clutter = 0.12;      // low-frequency background amplitude
  double noise_sigma = 0.05;  // white noise sigma
  std::uint64_t seed = 0;

  void validate() const {
    if (height < 8 || width < 8) throw std::invalid_argument("SceneSpec: frame too small");
    if (count_min < 0 || count_max < count_min)
      throw std::invalid_argument("SceneSpec: bad target count range");
    if (!(sigma_min > 0.0) || sigma_max < sigma_min)
      throw std::invalid_argument("SceneSpec: sigmas must be positive and ordered");
    if (!(amp_min > 0.0) || amp_max < amp_min)
      throw std::invalid_argument("SceneSpec: amplitudes must be positive and ordered");
    if (clutter < 0.0 || noise_sigma < 0.0)
      throw std::invalid_argument("SceneSpec: clutter/noise must be non-negative");
    // Targets must fit with a 3-sigma margin on every side.
    if (2.0 * 3.0 * sigma_max >= double(std::min(height, width) - 1))
      throw std::invalid_argument("SceneSpec: sigma_max too large for the frame");
  }
};

struct Blob {
  double cy = 0.0, cx = 0.0;
  double sigma = 1.0;
  double amp = 0.0;
};

struct Scene {
  GrayImage image;  // clutter + targets + noise, clamped
  GrayImage clean;  // clutter + targets, clamped (no noise)
  BinaryMask mask;  // half-peak level set of the noiseless target field
  std::vector<Blob> blobs;
  std::uint64_t seed = 0;
};

// Deterministic scene synthesis.  Draw order: two background cosines, then
// the target count, then per-target (sigma, amplitude, placement attempts),
// then the noise field; changing any SceneSpec field changes everything
// downstream, nothing else does.
inline Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int h = spec.height, w = spec.width;

  // Background: base level plus two random low-frequency plane cosines.
  struct Cosine {
    double fy, fx, phase;
  };
  Cosine cos_param[2];
  for (auto& c : cos_param) {
    c.fy = rng.uniform(0.5, 2.0);  // cycles per frame, kept low-frequency
    c.fx = rng.uniform(0.5, 2.0);
    c.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  GrayImage clean(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = 0.3;
      for (const auto& c : cos_param) {
        v += 0.5 * spec.clutter *
             std::cos(2.0 * std::numbers::pi * (c.fy * y / h + c.fx * x / w) + c.phase);
      }
      clean.at(y, x) = v;
    }
  }

  // Targets: rejection placement keeping centers 3*(sigma_i + sigma_j) apart
  // so half-peak supports (radius ~1.18 sigma) stay well separated.
  const int count = spec.count_max > 0 ? rng.uniform_int(spec.count_min, spec.count_max) : 0;
  std::vector<Blob> blobs;
  for (int i = 0; i < count; ++i) {
    Blob b;
    b.sigma = rng.uniform(spec.sigma_min, spec.sigma_max);
    b.amp = rng.uniform(spec.amp_min, spec.amp_max);
    const double margin = 3.0 * b.sigma;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      b.cy = rng.uniform(margin, double(h - 1) - margin);
      b.cx = rng.uniform(margin, double(w - 1) - margin);
      placed = true;
      for (const auto& other : blobs) {
        const double dy = b.cy - other.cy, dx = b.cx - other.cx;
        if (std::sqrt(dy * dy + dx * dx) < 3.0 * (b.sigma + other.sigma)) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) throw std::runtime_error("generate_scene: infeasible target placement");
    blobs.push_back(b);
  }

  // Noiseless target field and its closed-form half-peak mask:
  // amp*exp(-d^2/(2 sigma^2)) > amp/2  <=>  d^2 < 2 sigma^2 ln 2.
  BinaryMask mask(h, w);
  for (const auto& b : blobs) {
    const double r2 = 2.0 * b.sigma * b.sigma * std::numbers::ln2;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
        clean.at(y, x) += b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
        if (d2 < r2) mask.at(y, x) = 1;
      }
    }
  }

  Scene scene;
  scene.seed = spec.seed;
  scene.blobs = std::move(blobs);
  scene.mask = std::move(mask);
  scene.image = GrayImage(h, w);
  for (std::size_t i = 0; i < clean.pixels.size(); ++i) {
    scene.image.pixels[i] = clamp01(clean.pixels[i] + rng.normal(0.0, spec.noise_sigma));
    clean.pixels[i] = clamp01(clean.pixels[i]);
  }
  scene.clean = std::move(clean);
  return scene;
}

namespace detail {

// Binary 3x3 dilation/erosion with zero padding: pixels past the border are
// background, so erosion shrinks the mask at the frame edge.
inline BinaryMask morph3(const BinaryMask& m, bool dilate) {
  BinaryMask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      bool any = false, all = true;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy, nx = x + dx;
          const bool v = ny >= 0 && ny < m.height && nx >= 0 && nx < m.width && m.at(ny, nx);
          any = any || v;
          all = all && v;
        }
      }
      out.at(y, x) = dilate ? (any ? 1 : 0) : (all ? 1 : 0);
    }
  }
  return out;
}

}  // namespace detail

// Morphological gradient: dilation(mask) AND NOT erosion(mask), both 3x3.
inline BinaryMask edge_from_mask(const BinaryMask& mask) {
  const BinaryMask d = detail::morph3(mask, true);
  const BinaryMask e = detail::morph3(mask, false);
  BinaryMask out(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    out.bits[i] = d.bits[i] && !e.bits[i] ? 1 : 0;
  }
  return out;
}

// JSON sidecar recorded next to each exported scene.
inline nlohmann::json scene_sidecar(const SceneSpec& spec, const Scene& scene) {
  nlohmann::json j;
  j["generator"] = kRngId;
  j["seed"] = scene.seed;
  j["spec"] = {{"height", spec.height},
               {"width", spec.width},
               {"count_min", spec.count_min},
               {"count_max", spec.count_max},
               {"sigma_min", spec.sigma_min},
               {"sigma_max", spec.sigma_max},
               {"amp_min", spec.amp_min},
               {"amp_max", spec.amp_max},
               {"clutter", spec.clutter},
               {"noise_sigma", spec.noise_sigma}};
  j["centroids"] = nlohmann::json::array();
  for (const auto& b : scene.blobs) {
    j["centroids"].push_back({{"y", b.cy}, {"x", b.cx}, {"sigma", b.sigma}, {"amp", b.amp}});
  }
  j["count"] = scene.blobs.size();
  return j;
}

}  // namespace irstd::synth
