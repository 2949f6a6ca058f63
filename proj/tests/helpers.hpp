#pragma once

// Test-only helpers: random generators and independent reference
// implementations used as oracles. These stay deliberately naive and
// separate from the library code paths they check.

#include <Eigen/Core>
#include <algorithm>
#include <optional>
#include <vector>

#include "gazedetr/common.hpp"
#include "gazedetr/geometry.hpp"
#include "gazedetr/matching.hpp"
#include "gazedetr/metrics.hpp"

namespace testutil {

using gazedetr::Box;
using gazedetr::DetectionSet;

// interior box: corners stay inside [0,1] so corner round-trips are exact
inline Box random_box(gazedetr::Rng& rng) {
  const double x1 = rng.uniform(0.0, 0.98);
  const double x2 = rng.uniform(x1 + 0.01, 1.0);
  const double y1 = rng.uniform(0.0, 0.98);
  const double y2 = rng.uniform(y1 + 0.01, 1.0);
  return gazedetr::from_corners(x1, y1, x2, y2);
}

// ---- brute-force assignment oracle ----

struct BruteResult {
  double cost = 0.0;
  std::vector<std::pair<int, int>> pairs;
};

inline void brute_recurse(const Eigen::MatrixXd& c, int row, int left,
                          std::vector<char>& used,
                          std::vector<std::pair<int, int>>& cur, double acc,
                          std::optional<BruteResult>& best) {
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  if (left == 0) {
    if (!best || acc < best->cost ||
        (acc == best->cost && cur < best->pairs))
      best = BruteResult{acc, cur};
    return;
  }
  if (n - row < left) return;
  // skip this row (only allowed if enough rows remain)
  brute_recurse(c, row + 1, left, used, cur, acc, best);
  for (int t = 0; t < m; ++t) {
    if (used[t]) continue;
    used[t] = 1;
    cur.emplace_back(row, t);
    brute_recurse(c, row + 1, left - 1, used, cur, acc + c(row, t), best);
    cur.pop_back();
    used[t] = 0;
  }
}

// exact minimum over all one-to-one assignments of min(n,m) pairs,
// lexicographically smallest pair list among the optima
inline BruteResult brute_force_assignment(const Eigen::MatrixXd& c) {
  std::optional<BruteResult> best;
  std::vector<char> used(static_cast<std::size_t>(c.cols()), 0);
  std::vector<std::pair<int, int>> cur;
  brute_recurse(c, 0, std::min<int>(static_cast<int>(c.rows()), static_cast<int>(c.cols())),
                used, cur, 0.0, best);
  if (!best) return BruteResult{};
  return *best;
}

// ---- brute-force detection evaluator ----
// Independent re-implementation of greedy matching + interpolated AP,
// written against the protocol description rather than the library code.

struct RefMatch {
  std::vector<char> tp;
  int fn = 0;
};

inline RefMatch ref_greedy(const DetectionSet& ds, const std::vector<Box>& gts,
                           double thr) {
  RefMatch r;
  r.tp.assign(ds.dets.size(), 0);
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t d = 0; d < ds.dets.size(); ++d) {
    double best = -1.0;
    int pick = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = gazedetr::iou(ds.dets[d].box, gts[g]);
      if (v >= thr && v > best) {
        best = v;
        pick = static_cast<int>(g);
      }
    }
    if (pick >= 0) {
      taken[pick] = 1;
      r.tp[d] = 1;
    }
  }
  for (char t : taken)
    if (!t) ++r.fn;
  return r;
}

inline std::optional<double> ref_average_precision(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& gts, double thr) {
  std::size_t n_gt = 0;
  for (const auto& g : gts) n_gt += g.size();
  if (n_gt == 0) return std::nullopt;

  struct Row {
    double score;
    int img, idx;
    char tp;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto m = ref_greedy(dets[i], gts[i], thr);
    for (std::size_t d = 0; d < dets[i].dets.size(); ++d)
      rows.push_back(Row{dets[i].dets[d].score, static_cast<int>(i),
                         static_cast<int>(d), m.tp[d]});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.img != b.img) return a.img < b.img;
    return a.idx < b.idx;
  });

  double ap_sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double want = k / 100.0;
    // max precision over all prefixes whose recall reaches `want`
    double best = 0.0;
    int tp = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      tp += rows[i].tp;
      const double recall = static_cast<double>(tp) / static_cast<double>(n_gt);
      const double precision = static_cast<double>(tp) / static_cast<double>(i + 1);
      if (recall >= want) best = std::max(best, precision);
    }
    ap_sum += best;
  }
  return ap_sum / 101.0;
}

inline std::optional<double> ref_ap_range(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& gts) {
  double s = 0.0;
  for (double t : gazedetr::kIouThresholds) {
    auto ap = ref_average_precision(dets, gts, t);
    if (!ap) return std::nullopt;
    s += *ap;
  }
  return s / 7.0;
}

inline std::optional<double> ref_average_recall(
    const std::vector<DetectionSet>& dets,
    const std::vector<std::vector<Box>>& gts, int max_dets = 100) {
  std::size_t n_gt = 0;
  for (const auto& g : gts) n_gt += g.size();
  if (n_gt == 0) return std::nullopt;
  double s = 0.0;
  for (double t : gazedetr::kIouThresholds) {
    int tp = 0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      DetectionSet capped = dets[i];
      if (capped.dets.size() > static_cast<std::size_t>(max_dets))
        capped.dets.resize(static_cast<std::size_t>(max_dets));
      const auto m = ref_greedy(capped, gts[i], t);
      for (char x : m.tp) tp += x;
    }
    s += static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  return s / 7.0;
}

}  // namespace testutil
