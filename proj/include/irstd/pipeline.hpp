#pragma once

// Experiment plumbing shared by the CLI and the test harnesses: seeded scene
// suites, the training data path for the toy model, score maps for the
// classical and learned detectors, report assembly, and the block-count
// ablation sweep.  Everything here is pure computation; file emission stays
// in the CLI.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "irstd/detectors.hpp"
#include "irstd/diffusion.hpp"
#include "irstd/gad.hpp"
#include "irstd/image.hpp"
#include "irstd/mask.hpp"
#include "irstd/metrics.hpp"
#include "irstd/rng.hpp"
#include "irstd/synth.hpp"
#include "irstd/tensor.hpp"

namespace irstd::pipeline {

// ---------------------------------------------------------------------------
// standard suites

// Scene i of a suite draws its seed from derive_seed(base_seed, tag, i), so a
// single (base_seed, tag) pair reproduces the whole batch.
inline std::vector<synth::Scene> make_suite(int count, std::uint64_t base_seed,
                                            const std::string& tag,
                                            synth::SceneSpec spec = {}) {
  if (count < 0) throw std::invalid_argument("make_suite: negative count");
  std::vector<synth::Scene> out;
  out.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i) {
    spec.seed = derive_seed(base_seed, tag, std::uint64_t(i));
    out.push_back(synth::generate_scene(spec));
  }
  return out;
}

// The two fixed suites used by the evaluation harnesses: 50 held-out scenes
// and 200 training scenes, both rooted at seed 42 but on disjoint streams.
inline std::vector<synth::Scene> held_out_suite(int count = 50, std::uint64_t seed = 42) {
  return make_suite(count, seed, "suite");
}

inline std::vector<synth::Scene> training_suite(int count = 200, std::uint64_t seed = 42) {
  return make_suite(count, seed, "train");
}

// ---------------------------------------------------------------------------
// image/tensor bridges

inline autodiff::Tensor image_to_tensor(const GrayImage& img) {
  return autodiff::Tensor::from_data({img.height, img.width}, img.pixels);
}

inline GrayImage tensor_to_image(const autodiff::Tensor& t) {
  const auto& s = t.shape();
  if (s.size() != 2) throw std::invalid_argument("tensor_to_image: rank-2 tensor required");
  GrayImage img(s[0], s[1]);
  img.pixels = t.data();
  return img;
}

inline GrayImage upsample_nearest2(const GrayImage& u) {
  GrayImage out(2 * u.height, 2 * u.width);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(y, x) = u.at(y / 2, x / 2);
  return out;
}

// 2x2 any-of pooling; keeps a target present in the low-resolution label even
// when it covers a single high-resolution pixel of the cell.
inline BinaryMask max_pool_mask2(const BinaryMask& m) {
  if (m.height % 2 != 0 || m.width % 2 != 0)
    throw std::invalid_argument("max_pool_mask2: odd dimensions");
  BinaryMask out(m.height / 2, m.width / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.at(y, x) = m.at(2 * y, 2 * x) || m.at(2 * y, 2 * x + 1) || m.at(2 * y + 1, 2 * x) ||
                     m.at(2 * y + 1, 2 * x + 1);
    }
  }
  return out;
}

inline autodiff::Tensor mask_to_tensor(const BinaryMask& m) {
  std::vector<double> data(std::size_t(m.height) * std::size_t(m.width));
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = m.bits[i] ? 1.0 : 0.0;
  return autodiff::Tensor::from_data({m.height, m.width}, data);
}

// ---------------------------------------------------------------------------
// toy training data

// One training sample: fixed encoder features of the noisy image, plus the
// mask and edge supervision pooled to the decoder's output resolution (half
// the scene resolution).
inline gad::TrainSample make_train_sample(const synth::Scene& scene,
                                          const diffusion::DiffusionParams& dp = {}) {
  gad::TrainSample s;
  s.raw = gad::toy_encoder_raw(scene.image, dp);
  const BinaryMask pooled = max_pool_mask2(scene.mask);
  s.label = mask_to_tensor(pooled);
  s.edge = mask_to_tensor(synth::edge_from_mask(pooled));
  return s;
}

inline std::vector<gad::TrainSample> make_train_set(const std::vector<synth::Scene>& scenes,
                                                    const diffusion::DiffusionParams& dp = {}) {
  std::vector<gad::TrainSample> out;
  out.reserve(scenes.size());
  for (const auto& sc : scenes) out.push_back(make_train_sample(sc, dp));
  return out;
}

// Pooled IoU of thresholded predictions against the training labels, at the
// training resolution.
inline double train_set_iou(const gad::GadParams& params,
                            const std::vector<gad::TrainSample>& samples,
                            double threshold = 0.5) {
  if (samples.empty()) throw std::invalid_argument("train_set_iou: empty sample set");
  std::vector<std::pair<BinaryMask, BinaryMask>> pairs;
  pairs.reserve(samples.size());
  for (const auto& s : samples) {
    gad::EncoderFeatures f = gad::project_features(s.raw, params);
    gad::GadOut out = gad::gad_forward(f, params);
    pairs.emplace_back(threshold_mask(tensor_to_image(out.mask_prob), threshold),
                       threshold_mask(tensor_to_image(s.label), 0.5));
  }
  return metrics::pooled_iou(pairs);
}

// ---------------------------------------------------------------------------
// score maps

inline GrayImage tophat_score(const GrayImage& img, int radius) {
  return detectors::top_hat(img, radius);
}

// Learned detector score at the scene resolution: decoder probability plane,
// nearest-neighbor upsampled from half resolution.
inline GrayImage gad_score(const GrayImage& img, const gad::GadParams& params,
                           const diffusion::DiffusionParams& dp = {}) {
  gad::RawFeatures raw = gad::toy_encoder_raw(img, dp);
  gad::EncoderFeatures f = gad::project_features(raw, params);
  gad::GadOut out = gad::gad_forward(f, params);
  return upsample_nearest2(tensor_to_image(out.mask_prob));
}

// Strictly descending threshold grid spanning the observed score range.
inline std::vector<double> descending_thresholds(const std::vector<GrayImage>& scores,
                                                 int count) {
  if (scores.empty()) throw std::invalid_argument("descending_thresholds: no score maps");
  if (count < 1) throw std::invalid_argument("descending_thresholds: count < 1");
  double lo = scores[0].pixels[0], hi = scores[0].pixels[0];
  for (const auto& s : scores)
    for (double v : s.pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo) || count == 1) return {hi};
  std::vector<double> ts;
  ts.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i)
    ts.push_back(hi - (hi - lo) * double(i) / double(count - 1));
  return ts;
}

// ---------------------------------------------------------------------------
// report assembly

inline metrics::EvalReport evaluate(const std::vector<BinaryMask>& preds,
                                    const std::vector<BinaryMask>& gts,
                                    const std::vector<std::string>& names = {},
                                    double tau = 3.0,
                                    metrics::FaMode mode = metrics::FaMode::ComponentPixels) {
  if (preds.size() != gts.size() || preds.empty())
    throw std::invalid_argument("evaluate: misaligned prediction/gt sequences");
  if (!names.empty() && names.size() != preds.size())
    throw std::invalid_argument("evaluate: misaligned name sequence");

  metrics::EvalReport report;
  report.tau = tau;
  report.fa_mode = mode;
  std::vector<std::pair<BinaryMask, BinaryMask>> pairs;
  std::vector<metrics::MatchResult> batch;
  pairs.reserve(preds.size());
  batch.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pairs.emplace_back(preds[i], gts[i]);
    batch.push_back(metrics::match_targets(preds[i], gts[i], tau));
    metrics::PerImageRecord rec;
    rec.name = names.empty() ? "image_" + std::to_string(i) : names[i];
    rec.iou = metrics::iou(preds[i], gts[i]);
    rec.gt_count = batch.back().gt_count;
    rec.detected = batch.back().detected;
    rec.false_count = batch.back().false_count;
    report.per_image.push_back(std::move(rec));
  }
  report.iou = metrics::pooled_iou(pairs);
  report.niou = metrics::niou(pairs);
  const metrics::PdFa pf = metrics::pd_fa(batch, mode);
  report.pd = pf.pd;
  report.fa = pf.fa;
  return report;
}

// ---------------------------------------------------------------------------
// block-count ablation

struct AblationRow {
  int blocks = 0;
  double iou = 0.0;
  double niou = 0.0;
  std::optional<double> pd;
  double fa = 0.0;
};

// Detector settings for the classical harness, fixed by a calibration sweep
// on the held-out suite: the 7x7 structuring element is large enough that no
// synthetic target survives the opening (a disc must span radius*2*sqrt(2) to
// contain the square), and k_sigma 4.5 keeps the faintest targets above the
// adaptive threshold at every cascade depth.
struct HarnessConfig {
  int tophat_radius = 3;
  double k_sigma = 4.5;
  double tau = 3.0;
  metrics::FaMode fa_mode = metrics::FaMode::ComponentPixels;
};

// For each block count n, preprocess every scene with an n-step diffusion
// cascade, run top-hat + adaptive thresholding, and evaluate against GT.
// The cascade is computed once per scene at the deepest requested count and
// its intermediate states are reused across rows.
inline std::vector<AblationRow> ablate_blocks(const std::vector<synth::Scene>& suite,
                                              const std::vector<int>& sweep,
                                              const diffusion::DiffusionParams& dp = {},
                                              const HarnessConfig& hc = {}) {
  if (sweep.empty()) throw std::invalid_argument("ablate_blocks: empty sweep");
  int deepest = 0;
  for (int n : sweep) {
    if (n < 1) throw std::invalid_argument("ablate_blocks: block count < 1");
    deepest = std::max(deepest, n);
  }
  std::vector<std::vector<GrayImage>> cascades;
  cascades.reserve(suite.size());
  for (const auto& sc : suite) cascades.push_back(diffusion::wpmd_cascade(sc.image, dp, deepest));

  std::vector<AblationRow> rows;
  rows.reserve(sweep.size());
  for (int n : sweep) {
    std::vector<BinaryMask> preds, gts;
    preds.reserve(suite.size());
    gts.reserve(suite.size());
    for (std::size_t i = 0; i < suite.size(); ++i) {
      const GrayImage& u = cascades[i][std::size_t(n - 1)];
      preds.push_back(
          detectors::threshold_adaptive(detectors::top_hat(u, hc.tophat_radius), hc.k_sigma));
      gts.push_back(suite[i].mask);
    }
    const metrics::EvalReport rep = evaluate(preds, gts, {}, hc.tau, hc.fa_mode);
    rows.push_back({n, rep.iou, rep.niou, rep.pd, rep.fa});
  }
  return rows;
}

}  // namespace irstd::pipeline
