#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "gazedetr/geometry.hpp"

namespace gazedetr {

struct ScoredBox {
  Box box;
  double score = 0.0;
};

// Per-image detections, sorted nonincreasing by score.
struct DetectionSet {
  std::string image_id;
  std::vector<ScoredBox> dets;
};

inline DetectionSet make_detection_set(std::string image_id,
                                       std::vector<ScoredBox> dets) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const ScoredBox& a, const ScoredBox& b) {
                     return a.score > b.score;
                   });
  for (const auto& d : dets)
    require(std::isfinite(d.score), "detection score must be finite");
  return DetectionSet{std::move(image_id), std::move(dets)};
}

// IoU thresholds 0.2..0.5 step 0.05
inline constexpr std::array<double, 7> kIouThresholds = {
    0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50};

struct GreedyMatchResult {
  std::vector<char> is_tp;  // aligned with detection order
  int fn = 0;
};

// PASCAL/COCO-style greedy matching: in score order each detection takes the
// highest-IoU unmatched ground truth at or above the threshold.
inline GreedyMatchResult match_greedy(const DetectionSet& dets,
                                      const std::vector<Box>& gts,
                                      double iou_thresh) {
  for (std::size_t i = 1; i < dets.dets.size(); ++i)
    require(dets.dets[i - 1].score >= dets.dets[i].score,
            "match_greedy: detections must be sorted by score");
  GreedyMatchResult r;
  r.is_tp.assign(dets.dets.size(), 0);
  std::vector<char> gt_used(gts.size(), 0);
  for (std::size_t d = 0; d < dets.dets.size(); ++d) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      const double v = iou(dets.dets[d].box, gts[g]);
      if (v >= iou_thresh && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      gt_used[best] = 1;
      r.is_tp[d] = 1;
    }
  }
  for (char u : gt_used)
    if (!u) ++r.fn;
  return r;
}

namespace detail {

struct PooledDet {
  double score;
  int image;
  int index;
  char tp;
};

inline std::vector<PooledDet> pool_detections(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& gts, double iou_thresh,
    int max_per_image) {
  require(dets.size() == gts.size(),
          "evaluation: detections/ground-truth image counts differ");
  std::vector<PooledDet> pooled;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    DetectionSet capped = dets[i];
    if (max_per_image >= 0 &&
        capped.dets.size() > static_cast<std::size_t>(max_per_image))
      capped.dets.resize(max_per_image);
    const auto m = match_greedy(capped, gts[i], iou_thresh);
    for (std::size_t d = 0; d < capped.dets.size(); ++d)
      pooled.push_back(PooledDet{capped.dets[d].score, static_cast<int>(i),
                                 static_cast<int>(d), m.is_tp[d]});
  }
  std::sort(pooled.begin(), pooled.end(),
            [](const PooledDet& a, const PooledDet& b) {
              return std::tie(b.score, a.image, a.index) <
                     std::tie(a.score, b.image, b.index);
            });
  return pooled;
}

inline std::size_t total_gt(const std::vector<std::vector<Box>>& gts) {
  std::size_t n = 0;
  for (const auto& g : gts) n += g.size();
  return n;
}

}  // namespace detail

// Dataset-pooled 101-point interpolated AP. Returns nullopt when the dataset
// has no ground truth (distinguished from a true zero).
inline std::optional<double> average_precision(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& gts, double iou_thresh) {
  const std::size_t n_gt = detail::total_gt(gts);
  if (n_gt == 0) return std::nullopt;
  const auto pooled = detail::pool_detections(dets, gts, iou_thresh, -1);
  std::vector<double> prec(pooled.size()), rec(pooled.size());
  int tp = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    tp += pooled[i].tp;
    prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    rec[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  // precision envelope from the right
  for (std::size_t i = prec.size(); i-- > 1;)
    prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(rec.begin(), rec.end(), r);
    if (it != rec.end()) sum += prec[static_cast<std::size_t>(it - rec.begin())];
  }
  return sum / 101.0;
}

inline std::optional<double> ap_range(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& gts) {
  double sum = 0.0;
  for (double t : kIouThresholds) {
    const auto ap = average_precision(dets, gts, t);
    if (!ap) return std::nullopt;
    sum += *ap;
  }
  return sum / static_cast<double>(kIouThresholds.size());
}

// Recall at up to 100 detections per image, averaged over the standard
// threshold range.
inline std::optional<double> average_recall(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& gts, int max_dets = 100) {
  const std::size_t n_gt = detail::total_gt(gts);
  if (n_gt == 0) return std::nullopt;
  double sum = 0.0;
  for (double t : kIouThresholds) {
    const auto pooled = detail::pool_detections(dets, gts, t, max_dets);
    int tp = 0;
    for (const auto& p : pooled) tp += p.tp;
    sum += static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  return sum / static_cast<double>(kIouThresholds.size());
}

// Fraction of confounder regions hit by at least one confident detection.
// Operationalizes "false positives on regions experts reviewed but did not
// annotate". Returns nullopt when there are no confounder regions.
inline std::optional<double> confounder_fp_rate(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& confounders, double score_thresh,
    double iou_thresh) {
  require(dets.size() == confounders.size(),
          "confounder_fp_rate: image counts differ");
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (const Box& region : confounders[i]) {
      ++total;
      for (const auto& d : dets[i].dets) {
        if (d.score >= score_thresh && iou(d.box, region) >= iou_thresh) {
          ++hit;
          break;
        }
      }
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(total);
}

struct EvalReport {
  std::optional<double> ap_range;
  std::optional<double> ap_02;
  std::optional<double> ap_05;
  std::optional<double> ar;
  std::optional<double> confounder_fp;
  std::vector<std::pair<double, std::optional<double>>> per_threshold_ap;
  long tp_05 = 0, fp_05 = 0, fn_05 = 0;  // at IoU 0.5, score >= 0.5
};

inline EvalReport evaluate_detections(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& gts,
    const std::vector<std::vector<Box>>& confounders,
    double score_thresh = 0.5) {
  EvalReport r;
  r.ap_range = ap_range(dets, gts);
  r.ap_02 = average_precision(dets, gts, 0.20);
  r.ap_05 = average_precision(dets, gts, 0.50);
  r.ar = average_recall(dets, gts);
  r.confounder_fp = confounder_fp_rate(dets, confounders, score_thresh, 0.25);
  for (double t : kIouThresholds)
    r.per_threshold_ap.emplace_back(t, average_precision(dets, gts, t));
  for (std::size_t i = 0; i < dets.size(); ++i) {
    DetectionSet confident{dets[i].image_id, {}};
    for (const auto& d : dets[i].dets)
      if (d.score >= score_thresh) confident.dets.push_back(d);
    const auto m = match_greedy(confident, gts[i], 0.5);
    for (char t : m.is_tp) t ? ++r.tp_05 : ++r.fp_05;
    r.fn_05 += m.fn;
  }
  return r;
}

}  // namespace gazedetr
