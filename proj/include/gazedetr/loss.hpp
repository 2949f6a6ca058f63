#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gazedetr/autograd.hpp"
#include "gazedetr/common.hpp"
#include "gazedetr/detector.hpp"
#include "gazedetr/geometry.hpp"
#include "gazedetr/matching.hpp"

namespace gazedetr {

enum class Phase { warmup, main };

inline std::string phase_name(Phase p) {
  return p == Phase::warmup ? "warmup" : "main";
}

struct LossWeights {
  double w_class = 1.0;
  double w_l1 = 5.0;
  double w_giou = 2.0;
  double w_noobj = 0.1;      // class weight for unmatched learnable queries
  double w_gazequery = 1.0;  // weight for the gaze no-object term
};

inline void validate(const LossWeights& w) {
  require(w.w_class >= 0 && w.w_l1 >= 0 && w.w_giou >= 0 && w.w_noobj >= 0 &&
              w.w_gazequery >= 0,
          "LossWeights: weights must be >= 0");
}

// Warm-up supervises gaze-only boxes as their own positive class; the main
// phase drops them and supervises candida only.
inline std::vector<LabeledBox> assemble_targets(
    const std::vector<LabeledBox>& candida, const std::vector<Box>& gaze_only,
    Phase phase) {
  std::vector<LabeledBox> out;
  out.reserve(candida.size() +
              (phase == Phase::warmup ? gaze_only.size() : 0));
  for (const auto& c : candida) {
    require(c.category == Category::candida,
            "assemble_targets: candida list carries a foreign label");
    require(box_valid(c.box), "assemble_targets: invalid candida box");
    out.push_back(c);
  }
  if (phase == Phase::warmup)
    for (const auto& b : gaze_only) {
      require(box_valid(b), "assemble_targets: invalid gaze-only box");
      out.push_back({b, Category::gaze_only});
    }
  return out;
}

// Matching cost between candidate rows and targets:
//   -w_class * p(class_t) + w_l1 * L1(box) + w_giou * (1 - GIoU).
// `probs` holds one softmax row per candidate, `boxes` the candidate boxes.
inline Eigen::MatrixXd build_cost_matrix(const Eigen::MatrixXd& probs,
                                         const std::vector<Box>& boxes,
                                         const std::vector<LabeledBox>& targets,
                                         const LossWeights& w) {
  validate(w);
  require(!targets.empty(), "build_cost_matrix: no targets");
  require(probs.cols() == kNumClasses,
          "build_cost_matrix: probs must have one column per class");
  require(probs.rows() == static_cast<Eigen::Index>(boxes.size()),
          "build_cost_matrix: one probability row per box");
  Eigen::MatrixXd cost(probs.rows(), static_cast<Eigen::Index>(targets.size()));
  for (Eigen::Index q = 0; q < cost.rows(); ++q) {
    const Box& pb = boxes[static_cast<std::size_t>(q)];
    for (Eigen::Index t = 0; t < cost.cols(); ++t) {
      const LabeledBox& tgt = targets[static_cast<std::size_t>(t)];
      const double l1 = std::abs(pb.cx - tgt.box.cx) +
                        std::abs(pb.cy - tgt.box.cy) +
                        std::abs(pb.w - tgt.box.w) + std::abs(pb.h - tgt.box.h);
      cost(q, t) = -w.w_class * probs(q, static_cast<int>(tgt.category)) +
                   w.w_l1 * l1 +
                   w.w_giou * (1.0 - giou(pb, tgt.box));
    }
  }
  return cost;
}

namespace detail {

// In-graph GIoU for matched (pred, target) box rows, one value per row.
// Unions and hulls stay positive because box widths/heights never reach 0.
template <typename S>
typename Tape<S>::Var giou_column(Tape<S>& t, typename Tape<S>::Var pred,
                                  typename Tape<S>::Var tgt) {
  using Var = typename Tape<S>::Var;
  auto col = [&](Var m, int j) { return t.slice_cols(m, j, 1); };
  auto minus_half = [&](Var c, Var s) {
    return t.sub(c, t.affine(s, S(0.5), S(0)));
  };
  auto plus_half = [&](Var c, Var s) {
    return t.add(c, t.affine(s, S(0.5), S(0)));
  };
  const Var px1 = minus_half(col(pred, 0), col(pred, 2));
  const Var px2 = plus_half(col(pred, 0), col(pred, 2));
  const Var py1 = minus_half(col(pred, 1), col(pred, 3));
  const Var py2 = plus_half(col(pred, 1), col(pred, 3));
  const Var tx1 = minus_half(col(tgt, 0), col(tgt, 2));
  const Var tx2 = plus_half(col(tgt, 0), col(tgt, 2));
  const Var ty1 = minus_half(col(tgt, 1), col(tgt, 3));
  const Var ty2 = plus_half(col(tgt, 1), col(tgt, 3));

  const Var iw = t.relu(t.sub(t.cmin(px2, tx2), t.cmax(px1, tx1)));
  const Var ih = t.relu(t.sub(t.cmin(py2, ty2), t.cmax(py1, ty1)));
  const Var inter = t.mul(iw, ih);
  const Var area_p = t.mul(col(pred, 2), col(pred, 3));
  const Var area_t = t.mul(col(tgt, 2), col(tgt, 3));
  const Var uni = t.sub(t.add(area_p, area_t), inter);
  const Var hull_w = t.sub(t.cmax(px2, tx2), t.cmin(px1, tx1));
  const Var hull_h = t.sub(t.cmax(py2, ty2), t.cmin(py1, ty1));
  const Var hull = t.mul(hull_w, hull_h);
  return t.sub(t.div(inter, uni), t.div(t.sub(hull, uni), hull));
}

}  // namespace detail

template <typename S>
struct DetectionLoss {
  typename Tape<S>::Var total;
  // value-side component sums over layers, for logging
  double class_term = 0.0;
  double l1_term = 0.0;
  double giou_term = 0.0;
  double gaze_term = 0.0;
  MatchAssignment match;             // last-layer match, query indices
  std::vector<int> matched_queries;  // query index per pair, pair order
};

// Set-prediction loss over all decoder layers. One Hungarian assignment is
// computed from the last layer and reused for every layer. Only learnable
// queries are eligible for matching; gaze queries are pushed toward
// no-object (main phase) and never receive box supervision.
template <typename S>
DetectionLoss<S> detection_loss(Tape<S>& t, const DecodeResult<S>& out,
                                const QuerySet<S>& queries,
                                const std::vector<LabeledBox>& targets,
                                Phase phase, const LossWeights& w) {
  using Var = typename Tape<S>::Var;
  using Mat = typename Tape<S>::Mat;
  validate(w);
  const int n_layers = static_cast<int>(out.logits.size());
  require(n_layers >= 1 && out.boxes.size() == out.logits.size() &&
              out.box_values.size() == out.logits.size(),
          "detection_loss: malformed decoder output");
  const int q_total = queries.size();
  require(q_total >= 1, "detection_loss: empty query set");
  require(static_cast<int>(queries.origin.size()) == q_total,
          "detection_loss: one origin flag per query");

  std::vector<int> learnable, gaze;
  for (int i = 0; i < q_total; ++i)
    (queries.origin[static_cast<std::size_t>(i)] == QueryOrigin::learnable
         ? learnable
         : gaze)
        .push_back(i);
  require(!learnable.empty(), "detection_loss: no learnable queries");
  require(phase == Phase::main || gaze.empty(),
          "detection_loss: gaze queries are a main-phase construct");
  for (const auto& tgt : targets) {
    require(box_valid(tgt.box), "detection_loss: invalid target box");
    const int tc = static_cast<int>(tgt.category);
    require(tc == kClassCandida || tc == kClassGazeOnly,
            "detection_loss: target class must be a positive class");
  }
  const int n_elig = static_cast<int>(learnable.size());
  const int n_gaze = static_cast<int>(gaze.size());

  DetectionLoss<S> result;
  if (!targets.empty()) {
    require(static_cast<int>(targets.size()) <= n_elig,
            "detection_loss: more targets than learnable queries");
    // last-layer values drive the assignment (double precision, off-tape)
    const Mat& last_logits = t.value(out.logits.back());
    Eigen::MatrixXd probs(n_elig, kNumClasses);
    std::vector<Box> boxes_elig;
    boxes_elig.reserve(static_cast<std::size_t>(n_elig));
    for (int r = 0; r < n_elig; ++r) {
      const int qi = learnable[static_cast<std::size_t>(r)];
      Eigen::Vector3d z;
      for (int c = 0; c < kNumClasses; ++c)
        z(c) = double(last_logits(qi, c));
      const Eigen::Vector3d e = (z.array() - z.maxCoeff()).exp();
      probs.row(r) = (e / e.sum()).transpose();
      boxes_elig.push_back(out.box_values.back()[static_cast<std::size_t>(qi)]);
    }
    const Eigen::MatrixXd cost = build_cost_matrix(probs, boxes_elig, targets, w);
    const MatchAssignment row_match = hungarian_match(cost);
    for (const auto& [r, c] : row_match.pairs) {
      const int qi = learnable[static_cast<std::size_t>(r)];
      check_state(queries.origin[static_cast<std::size_t>(qi)] ==
                      QueryOrigin::learnable,
                  "detection_loss: gaze query leaked into the assignment");
      result.match.pairs.emplace_back(qi, c);
      result.matched_queries.push_back(qi);
    }
    check_state(result.match.pairs.size() == targets.size(),
                "detection_loss: every target must be matched");
  }

  // per-query class target and CE weight, fixed across layers
  std::vector<int> cls(static_cast<std::size_t>(n_elig), kClassNoObject);
  std::vector<S> cw(static_cast<std::size_t>(n_elig), S(w.w_noobj));
  std::vector<int> query_row(static_cast<std::size_t>(q_total), -1);
  for (int r = 0; r < n_elig; ++r)
    query_row[static_cast<std::size_t>(learnable[static_cast<std::size_t>(r)])] = r;
  for (const auto& [qi, c] : result.match.pairs) {
    cls[static_cast<std::size_t>(query_row[static_cast<std::size_t>(qi)])] =
        static_cast<int>(targets[static_cast<std::size_t>(c)].category);
    cw[static_cast<std::size_t>(query_row[static_cast<std::size_t>(qi)])] = S(1);
  }
  const int n_matched = static_cast<int>(result.match.pairs.size());
  // DETR-style weighted-mean CE: matched queries at weight 1, the rest at
  // w_noobj, normalized by the weight sum so positive supervision is not
  // diluted by the large no-object majority.
  S cw_sum = S(0);
  for (const S& v : cw) cw_sum += v;

  Mat tgt_mat(n_matched, 4);
  for (int i = 0; i < n_matched; ++i) {
    const Box& b =
        targets[static_cast<std::size_t>(result.match.pairs[static_cast<std::size_t>(i)].second)]
            .box;
    tgt_mat(i, 0) = S(b.cx);
    tgt_mat(i, 1) = S(b.cy);
    tgt_mat(i, 2) = S(b.w);
    tgt_mat(i, 3) = S(b.h);
  }

  Var total = t.scalar(S(0));
  for (int l = 0; l < n_layers; ++l) {
    if (cw_sum > S(0)) {
      const Var logits_elig =
          t.gather_rows(out.logits[static_cast<std::size_t>(l)], learnable);
      const Var ce = t.ce_rows(logits_elig, cls, cw);
      const Var class_l = t.affine(t.sum(ce), S(w.w_class) / cw_sum, S(0));
      total = t.add(total, class_l);
      result.class_term += double(t.value(class_l)(0, 0));
    }

    if (n_matched > 0) {
      const Var pred = t.gather_rows(out.boxes[static_cast<std::size_t>(l)],
                                     result.matched_queries);
      const Var tgt = t.input(tgt_mat, false);
      const S inv_k = S(1.0 / n_matched);
      const Var l1_l =
          t.affine(t.sum(t.abs(t.sub(pred, tgt))), S(w.w_l1) * inv_k, S(0));
      const Var g = detail::giou_column(t, pred, tgt);
      const Var giou_l = t.affine(t.sum(t.affine(g, S(-1), S(1))),
                                  S(w.w_giou) * inv_k, S(0));
      total = t.add(total, t.add(l1_l, giou_l));
      result.l1_term += double(t.value(l1_l)(0, 0));
      result.giou_term += double(t.value(giou_l)(0, 0));
    }

    if (n_gaze > 0) {
      const Var logits_gaze = t.gather_rows(out.logits[static_cast<std::size_t>(l)], gaze);
      const Var ce_g = t.ce_rows(
          logits_gaze, std::vector<int>(static_cast<std::size_t>(n_gaze), kClassNoObject),
          std::vector<S>(static_cast<std::size_t>(n_gaze), S(1)));
      const Var gaze_l =
          t.affine(t.sum(ce_g), S(w.w_gazequery / n_gaze), S(0));
      total = t.add(total, gaze_l);
      result.gaze_term += double(t.value(gaze_l)(0, 0));
    }
  }
  result.total = total;
  check_state(std::isfinite(double(t.value(total)(0, 0))),
              "detection_loss: non-finite total");
  return result;
}

}  // namespace gazedetr
