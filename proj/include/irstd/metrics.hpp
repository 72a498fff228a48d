#pragma once

// Segmentation and detection metrics: pixel-level IoU / nIoU, 8-connected
// components, centroid matching, object-level Pd / Fa, ROC sweeps and a
// trapezoidal AUC convenience.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "irstd/image.hpp"
#include "irstd/mask.hpp"

namespace irstd::metrics {

// Pixel counting convention for the false-alarm rate.
enum class FaMode { ComponentPixels, AllFalsePixels };

inline const char* fa_mode_name(FaMode m) {
  return m == FaMode::ComponentPixels ? "component_pixels" : "all_false_pixels";
}

// |pred AND gt| / |pred OR gt|; two empty masks count as a perfect match.
inline double iou(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("iou: dimension mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    inter += pred.bits[i] & gt.bits[i];
    uni += pred.bits[i] | gt.bits[i];
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

// Mean of per-sample IoU (the per-image normalization that separates nIoU
// from batch-pooled IoU).
inline double niou(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("niou: empty sequence");
  double sum = 0.0;
  for (const auto& [pred, gt] : pairs) sum += iou(pred, gt);
  return sum / double(pairs.size());
}

struct Component {
  std::size_t pixels = 0;
  double cy = 0.0;  // pixel-count-weighted centroid
  double cx = 0.0;
};

struct Components {
  std::vector<Component> items;
  std::vector<int> labels;  // row-major, -1 for background, else component index
  int height = 0, width = 0;
};

// 8-connectivity labeling by iterative stack-based region growing.
inline Components connected_components(const BinaryMask& mask) {
  Components out;
  out.height = mask.height;
  out.width = mask.width;
  out.labels.assign(mask.bits.size(), -1);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.bits.size(); ++start) {
    if (!mask.bits[start] || out.labels[start] != -1) continue;
    const int label = int(out.items.size());
    Component comp;
    stack.push_back(start);
    out.labels[start] = label;
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      const int y = int(idx / std::size_t(mask.width));
      const int x = int(idx % std::size_t(mask.width));
      comp.pixels += 1;
      comp.cy += y;
      comp.cx += x;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= mask.height || nx < 0 || nx >= mask.width) continue;
          const std::size_t nidx = std::size_t(ny) * mask.width + nx;
          if (mask.bits[nidx] && out.labels[nidx] == -1) {
            out.labels[nidx] = label;
            stack.push_back(nidx);
          }
        }
      }
    }
    comp.cy /= double(comp.pixels);
    comp.cx /= double(comp.pixels);
    out.items.push_back(comp);
  }
  return out;
}

struct MatchResult {
  int gt_count = 0;
  int detected = 0;
  int missed = 0;
  int false_count = 0;
  std::size_t false_pixels = 0;      // pixels of unmatched predicted components
  std::size_t all_false_pixels = 0;  // predicted pixels outside the GT mask
  std::size_t total_pixels = 0;
};

// Greedy nearest-first centroid matching within Euclidean distance tau.
// Each predicted component consumes at most one GT component and vice versa;
// ties resolve by (pred index, gt index) so results are deterministic.
inline MatchResult match_targets(const BinaryMask& pred, const BinaryMask& gt, double tau = 3.0) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("match_targets: dimension mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("match_targets: tau must be positive");
  const Components pc = connected_components(pred);
  const Components gc = connected_components(gt);

  struct Pair {
    double dist;
    int pi, gi;
  };
  std::vector<Pair> candidates;
  for (int pi = 0; pi < int(pc.items.size()); ++pi) {
    for (int gi = 0; gi < int(gc.items.size()); ++gi) {
      const double dy = pc.items[pi].cy - gc.items[gi].cy;
      const double dx = pc.items[pi].cx - gc.items[gi].cx;
      const double d = std::sqrt(dy * dy + dx * dx);
      if (d <= tau) candidates.push_back({d, pi, gi});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.pi != b.pi) return a.pi < b.pi;
    return a.gi < b.gi;
  });

  std::vector<bool> pred_used(pc.items.size(), false), gt_used(gc.items.size(), false);
  MatchResult r;
  r.gt_count = int(gc.items.size());
  r.total_pixels = pred.bits.size();
  for (const auto& c : candidates) {
    if (pred_used[std::size_t(c.pi)] || gt_used[std::size_t(c.gi)]) continue;
    pred_used[std::size_t(c.pi)] = true;
    gt_used[std::size_t(c.gi)] = true;
    r.detected += 1;
  }
  r.missed = r.gt_count - r.detected;
  for (std::size_t pi = 0; pi < pc.items.size(); ++pi) {
    if (!pred_used[pi]) {
      r.false_count += 1;
      r.false_pixels += pc.items[pi].pixels;
    }
  }
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    if (pred.bits[i] && !gt.bits[i]) r.all_false_pixels += 1;
  }
  return r;
}

struct PdFa {
  std::optional<double> pd;  // absent when the batch has no GT components
  double fa = 0.0;
};

// Batch reduction: pd over GT components, fa over image pixels.
inline PdFa pd_fa(const std::vector<MatchResult>& batch, FaMode mode = FaMode::ComponentPixels) {
  if (batch.empty()) throw std::invalid_argument("pd_fa: empty batch");
  long long gt_total = 0, detected = 0;
  std::size_t false_px = 0, total_px = 0;
  for (const auto& m : batch) {
    gt_total += m.gt_count;
    detected += m.detected;
    false_px += mode == FaMode::ComponentPixels ? m.false_pixels : m.all_false_pixels;
    total_px += m.total_pixels;
  }
  PdFa out;
  if (gt_total > 0) out.pd = double(detected) / double(gt_total);
  out.fa = total_px > 0 ? double(false_px) / double(total_px) : 0.0;
  return out;
}

struct RocPoint {
  double threshold = 0.0;
  double fa = 0.0;
  double pd = 0.0;
};

// Sweeps strictly descending thresholds over score maps, matching against the
// GT masks at each cut; points come back sorted by fa ascending.
inline std::vector<RocPoint> roc(const std::vector<GrayImage>& scores,
                                 const std::vector<BinaryMask>& gts,
                                 const std::vector<double>& thresholds, double tau = 3.0,
                                 FaMode mode = FaMode::ComponentPixels) {
  if (scores.size() != gts.size() || scores.empty())
    throw std::invalid_argument("roc: misaligned score/gt sequences");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].height != gts[i].height || scores[i].width != gts[i].width)
      throw std::invalid_argument("roc: score/gt dimension mismatch");
  }
  if (thresholds.empty()) throw std::invalid_argument("roc: empty threshold sequence");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] < thresholds[i - 1]))
      throw std::invalid_argument("roc: thresholds must be strictly descending");
  }

  std::vector<RocPoint> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    std::vector<MatchResult> batch;
    batch.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      batch.push_back(match_targets(threshold_mask(scores[i], t), gts[i], tau));
    }
    const PdFa pf = pd_fa(batch, mode);
    points.push_back({t, pf.fa, pf.pd.value_or(0.0)});
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const RocPoint& a, const RocPoint& b) { return a.fa < b.fa; });
  return points;
}

// Normalized trapezoidal area under the (fa, pd) curve.  The curve starts at
// (0, 0), is linearly interpolated between points, and is held constant from
// the last point out to fa_cap; the area is divided by fa_cap so a perfect
// detector scores 1.  A curve whose points all sit at fa == 0 degenerates to
// its best pd (the detector achieves that pd with no false alarms at all).
inline double auc(const std::vector<RocPoint>& points, double fa_cap) {
  if (points.empty()) throw std::invalid_argument("auc: empty curve");
  std::vector<RocPoint> pts = points;
  std::stable_sort(pts.begin(), pts.end(),
                   [](const RocPoint& a, const RocPoint& b) { return a.fa < b.fa; });
  if (!(fa_cap > 0.0)) {
    double best = 0.0;
    for (const auto& p : pts) best = std::max(best, p.pd);
    return best;
  }
  double area = 0.0;
  double px = 0.0, py = 0.0;  // running curve position, starting at (0,0)
  for (const auto& p : pts) {
    const double x = std::min(p.fa, fa_cap);
    if (x > px) area += 0.5 * (py + p.pd) * (x - px);
    px = x;
    py = p.pd;
    if (p.fa >= fa_cap) break;
  }
  if (px < fa_cap) area += py * (fa_cap - px);
  return area / fa_cap;
}

struct PerImageRecord {
  std::string name;
  double iou = 0.0;
  int gt_count = 0;
  int detected = 0;
  int false_count = 0;
};

struct EvalReport {
  double iou = 0.0;
  double niou = 0.0;
  std::optional<double> pd;
  double fa = 0.0;
  double tau = 3.0;
  FaMode fa_mode = FaMode::ComponentPixels;
  std::vector<PerImageRecord> per_image;
  std::vector<RocPoint> roc;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["iou"] = iou;
    j["niou"] = niou;
    if (pd.has_value()) j["pd"] = *pd; else j["pd"] = nullptr;
    j["fa"] = fa;
    j["fa_e6"] = fa * 1e6;
    j["tau"] = tau;
    j["fa_mode"] = fa_mode_name(fa_mode);
    j["per_image"] = nlohmann::json::array();
    for (const auto& r : per_image) {
      j["per_image"].push_back({{"name", r.name},
                                {"iou", r.iou},
                                {"gt_count", r.gt_count},
                                {"detected", r.detected},
                                {"false_count", r.false_count}});
    }
    j["roc"] = nlohmann::json::array();
    for (const auto& p : roc) {
      j["roc"].push_back({{"threshold", p.threshold}, {"fa", p.fa}, {"pd", p.pd}});
    }
    return j;
  }
};

// Pools pixel counts over the batch (the "iou" headline number, as opposed
// to the per-sample mean reported as niou).
inline double pooled_iou(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("pooled_iou: empty sequence");
  std::size_t inter = 0, uni = 0;
  for (const auto& [pred, gt] : pairs) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("pooled_iou: dimension mismatch");
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
      inter += pred.bits[i] & gt.bits[i];
      uni += pred.bits[i] | gt.bits[i];
    }
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

}  // namespace irstd::metrics
