#pragma once

#include <Eigen/Core>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "gazedetr/geometry.hpp"

namespace gazedetr {

// One fixation: pre-segmented dwell at a pixel location.
struct GazePoint {
  double t_ms = 0;
  double x_px = 0;
  double y_px = 0;
  double dur_ms = 0;
};

struct GazeHeatmap {
  int h = 0, w = 0;
  double sigma_px = 0;
  Eigen::ArrayXXd grid;  // h rows, w cols, nonnegative
};

struct GazeParams {
  double sigma_px = 12.0;    // Gaussian kernel std, pixels
  double tau_rel = 0.3;      // threshold as fraction of heatmap max
  double min_area_px = 64.0; // minimum connected-component area
  double overlap_tau = 0.2;  // max IoU against any candida box
};

inline void validate(const GazeParams& p) {
  require(p.sigma_px > 0 && p.tau_rel > 0 && p.min_area_px > 0 &&
              p.overlap_tau > 0,
          "GazeParams: all parameters must be strictly positive");
  require(p.tau_rel < 1.0, "GazeParams: tau_rel must be < 1");
  require(p.overlap_tau < 1.0, "GazeParams: overlap_tau must be < 1");
}

struct BinaryMask {
  int h = 0, w = 0;
  std::vector<char> data;  // row-major

  char at(int r, int c) const { return data[static_cast<std::size_t>(r) * w + c]; }
  void set(int r, int c, char v) { data[static_cast<std::size_t>(r) * w + c] = v; }
};

inline void validate_trace(const std::vector<GazePoint>& trace, int h, int w) {
  double prev_t = -std::numeric_limits<double>::infinity();
  for (const auto& p : trace) {
    require(p.x_px >= 0 && p.x_px < w && p.y_px >= 0 && p.y_px < h,
            "gaze point out of image bounds");
    require(p.dur_ms >= 0, "gaze fixation duration must be >= 0");
    require(p.t_ms >= prev_t, "gaze trace must be sorted by t_ms");
    prev_t = p.t_ms;
  }
}

// Sum of duration-weighted isotropic Gaussians, one per fixation. Uses the
// separable outer-product form; no truncation window.
inline GazeHeatmap rasterize_gaze(const std::vector<GazePoint>& trace, int h,
                                  int w, double sigma_px) {
  require(h > 0 && w > 0 && sigma_px > 0, "rasterize_gaze: bad dimensions");
  validate_trace(trace, h, w);
  GazeHeatmap hm{h, w, sigma_px, Eigen::ArrayXXd::Zero(h, w)};
  const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
  Eigen::ArrayXd col(h), row(w);
  for (const auto& p : trace) {
    for (int r = 0; r < h; ++r) {
      const double dy = r - p.y_px;
      col[r] = std::exp(-dy * dy * inv2s2);
    }
    for (int c = 0; c < w; ++c) {
      const double dx = c - p.x_px;
      row[c] = std::exp(-dx * dx * inv2s2);
    }
    hm.grid += p.dur_ms * (col.matrix() * row.matrix().transpose()).array();
  }
  return hm;
}

namespace detail {

// 4-connected component labeling, labels in row-major discovery order.
// Returns label grid (-1 background) and per-component pixel counts.
inline int label_components(const BinaryMask& m, std::vector<int>& labels,
                            std::vector<int>& areas) {
  labels.assign(static_cast<std::size_t>(m.h) * m.w, -1);
  areas.clear();
  std::vector<int> stack;
  int next = 0;
  for (int r = 0; r < m.h; ++r) {
    for (int c = 0; c < m.w; ++c) {
      const int idx = r * m.w + c;
      if (!m.data[idx] || labels[idx] >= 0) continue;
      int area = 0;
      stack.push_back(idx);
      labels[idx] = next;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        ++area;
        const int cr = cur / m.w, cc = cur % m.w;
        const int nbr[4][2] = {{cr - 1, cc}, {cr + 1, cc}, {cr, cc - 1}, {cr, cc + 1}};
        for (const auto& n : nbr) {
          if (n[0] < 0 || n[0] >= m.h || n[1] < 0 || n[1] >= m.w) continue;
          const int nidx = n[0] * m.w + n[1];
          if (m.data[nidx] && labels[nidx] < 0) {
            labels[nidx] = next;
            stack.push_back(nidx);
          }
        }
      }
      areas.push_back(area);
      ++next;
    }
  }
  return next;
}

}  // namespace detail

// Relative threshold against the heatmap max, then removal of 4-connected
// components smaller than min_area_px. An all-zero heatmap yields an
// all-false mask.
inline BinaryMask threshold_and_clean(const GazeHeatmap& hm, double tau_rel,
                                      double min_area_px) {
  BinaryMask m{hm.h, hm.w, std::vector<char>(static_cast<std::size_t>(hm.h) * hm.w, 0)};
  const double peak = hm.grid.maxCoeff();
  if (peak <= 0.0) return m;
  const double cut = tau_rel * peak;
  for (int r = 0; r < hm.h; ++r)
    for (int c = 0; c < hm.w; ++c)
      if (hm.grid(r, c) >= cut) m.set(r, c, 1);
  std::vector<int> labels, areas;
  detail::label_components(m, labels, areas);
  for (int r = 0; r < hm.h; ++r)
    for (int c = 0; c < hm.w; ++c) {
      const int l = labels[static_cast<std::size_t>(r) * hm.w + c];
      if (l >= 0 && areas[l] < min_area_px) m.set(r, c, 0);
    }
  return m;
}

// Tight normalized box per 4-connected component, half-open pixel convention
// (x2 = (col_max + 1) / W). Order follows row-major component discovery.
inline std::vector<Box> extract_boxes(const BinaryMask& m) {
  std::vector<int> labels, areas;
  const int n = detail::label_components(m, labels, areas);
  std::vector<int> r0(n, 1 << 30), r1(n, -1), c0(n, 1 << 30), c1(n, -1);
  for (int r = 0; r < m.h; ++r)
    for (int c = 0; c < m.w; ++c) {
      const int l = labels[static_cast<std::size_t>(r) * m.w + c];
      if (l < 0) continue;
      r0[l] = std::min(r0[l], r);
      r1[l] = std::max(r1[l], r);
      c0[l] = std::min(c0[l], c);
      c1[l] = std::max(c1[l], c);
    }
  std::vector<Box> boxes;
  boxes.reserve(n);
  for (int l = 0; l < n; ++l)
    boxes.push_back(from_corners(
        static_cast<double>(c0[l]) / m.w, static_cast<double>(r0[l]) / m.h,
        static_cast<double>(c1[l] + 1) / m.w, static_cast<double>(r1[l] + 1) / m.h));
  return boxes;
}

// Keep the gaze boxes whose IoU with every candida box stays below
// overlap_tau; input order is preserved.
inline std::vector<LabeledBox> filter_gaze_only(
    const std::vector<Box>& gaze_boxes, const std::vector<Box>& candida_boxes,
    double overlap_tau) {
  std::vector<LabeledBox> out;
  for (const Box& g : gaze_boxes) {
    bool keep = true;
    for (const Box& c : candida_boxes)
      if (iou(g, c) >= overlap_tau) {
        keep = false;
        break;
      }
    if (keep) out.push_back(LabeledBox{g, Category::gaze_only});
  }
  return out;
}

// Full pipeline: rasterize -> threshold/clean -> boxes -> candida filtering.
inline std::vector<LabeledBox> process_gaze(const std::vector<GazePoint>& trace,
                                            const std::vector<Box>& candida_boxes,
                                            const GazeParams& params, int h,
                                            int w) {
  validate(params);
  const GazeHeatmap hm = rasterize_gaze(trace, h, w, params.sigma_px);
  const BinaryMask mask = threshold_and_clean(hm, params.tau_rel, params.min_area_px);
  const std::vector<Box> boxes = extract_boxes(mask);
  auto out = filter_gaze_only(boxes, candida_boxes, params.overlap_tau);
  for (const auto& g : out)
    for (const Box& c : candida_boxes)
      check_state(iou(g.box, c) < params.overlap_tau,
                  "process_gaze: output box overlaps a candida box");
  return out;
}

// --- gaze trace files: CSV with exact header t_ms,x_px,y_px,dur_ms ---

inline void write_gaze_csv(const std::string& path,
                           const std::vector<GazePoint>& trace) {
  std::ofstream f(path);
  check_state(f.good(), "cannot open for write: " + path);
  f << "t_ms,x_px,y_px,dur_ms\n";
  f.precision(17);
  for (const auto& p : trace)
    f << p.t_ms << ',' << p.x_px << ',' << p.y_px << ',' << p.dur_ms << '\n';
  check_state(f.good(), "write failed: " + path);
}

inline std::vector<GazePoint> read_gaze_csv(const std::string& path) {
  std::ifstream f(path);
  check_state(f.good(), "cannot open gaze trace: " + path);
  std::string line;
  check_state(static_cast<bool>(std::getline(f, line)), "empty gaze trace file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  check_state(line == "t_ms,x_px,y_px,dur_ms",
              "bad gaze CSV header in " + path + ": " + line);
  std::vector<GazePoint> trace;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    GazePoint p;
    char c1, c2, c3;
    std::istringstream is(line);
    is >> p.t_ms >> c1 >> p.x_px >> c2 >> p.y_px >> c3 >> p.dur_ms;
    check_state(!is.fail() && c1 == ',' && c2 == ',' && c3 == ',',
                "bad gaze CSV row in " + path + ": " + line);
    trace.push_back(p);
  }
  return trace;
}

}  // namespace gazedetr
