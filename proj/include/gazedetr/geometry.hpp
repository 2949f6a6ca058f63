#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "gazedetr/common.hpp"

namespace gazedetr {

// Center-format box normalized to [0,1]. Degenerate sizes are rejected at
// construction so downstream losses stay finite.
struct Box {
  double cx = 0.5, cy = 0.5, w = 1.0, h = 1.0;
};

struct Corners {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

inline bool box_valid(const Box& b) {
  return b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0 &&
         b.w > 0.0 && b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0;
}

inline Box make_box(double cx, double cy, double w, double h) {
  Box b{cx, cy, w, h};
  require(box_valid(b), "make_box: invalid box (cx=" + std::to_string(cx) +
                            " cy=" + std::to_string(cy) +
                            " w=" + std::to_string(w) +
                            " h=" + std::to_string(h) + ")");
  return b;
}

inline Corners to_corners(const Box& b) {
  return Corners{b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0,
                 b.cy + b.h / 2.0};
}

inline Box from_corners(double x1, double y1, double x2, double y2) {
  require(x2 > x1 && y2 > y1, "from_corners: empty extent");
  return make_box((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1);
}

inline Box from_corners(const Corners& c) {
  return from_corners(c.x1, c.y1, c.x2, c.y2);
}

// Clamp center to [0,1] and sizes to [min_size, 1]; used where jitter or
// arithmetic can push a box out of the valid range.
inline Box clip_box(double cx, double cy, double w, double h,
                    double min_size = 1e-4) {
  return Box{std::clamp(cx, 0.0, 1.0), std::clamp(cy, 0.0, 1.0),
             std::clamp(w, min_size, 1.0), std::clamp(h, min_size, 1.0)};
}

// All overlap math runs on the corner form so identical boxes give exactly
// inter == union (hence iou == 1).
inline double corner_area(const Corners& c) {
  const double w = c.x2 - c.x1;
  const double h = c.y2 - c.y1;
  return w * h;
}

inline double intersection_area(const Corners& ca, const Corners& cb) {
  const double iw =
      std::max(0.0, std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1));
  const double ih =
      std::max(0.0, std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1));
  return iw * ih;
}

inline double intersection_area(const Box& a, const Box& b) {
  return intersection_area(to_corners(a), to_corners(b));
}

inline double iou(const Box& a, const Box& b) {
  const Corners ca = to_corners(a), cb = to_corners(b);
  const double inter = intersection_area(ca, cb);
  const double uni = corner_area(ca) + corner_area(cb) - inter;
  return inter / uni;
}

inline double giou(const Box& a, const Box& b) {
  const Corners ca = to_corners(a), cb = to_corners(b);
  const double inter = intersection_area(ca, cb);
  const double uni = corner_area(ca) + corner_area(cb) - inter;
  const double ew = std::max(ca.x2, cb.x2) - std::min(ca.x1, cb.x1);
  const double eh = std::max(ca.y2, cb.y2) - std::min(ca.y1, cb.y1);
  const double enclose = ew * eh;
  return inter / uni - (enclose - uni) / enclose;
}

inline Eigen::MatrixXd pairwise_iou(const std::vector<Box>& a,
                                    const std::vector<Box>& b) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()),
                    static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          iou(a[i], b[j]);
  return m;
}

enum class Category { candida = 0, gaze_only = 1 };

// class-vocabulary indices used by the detector head
inline constexpr int kClassCandida = 0;
inline constexpr int kClassGazeOnly = 1;
inline constexpr int kClassNoObject = 2;
inline constexpr int kNumClasses = 3;

struct LabeledBox {
  Box box;
  Category category = Category::candida;
};

}  // namespace gazedetr
