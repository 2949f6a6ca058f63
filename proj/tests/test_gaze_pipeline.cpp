#include <catch2/catch_amalgamated.hpp>

#include "gazedetr/gaze.hpp"
#include "helpers.hpp"

using namespace gazedetr;

namespace {

// independent oracle: direct (non-separable) evaluation of the weighted
// Gaussian sum
Eigen::ArrayXXd direct_heatmap(const std::vector<GazePoint>& trace, int h,
                               int w, double sigma) {
  Eigen::ArrayXXd g = Eigen::ArrayXXd::Zero(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (const auto& p : trace) {
        const double d2 = (c - p.x_px) * (c - p.x_px) + (r - p.y_px) * (r - p.y_px);
        g(r, c) += p.dur_ms * std::exp(-d2 / (2.0 * sigma * sigma));
      }
  return g;
}

double masked_area(const BinaryMask& m) {
  double a = 0;
  for (char v : m.data) a += v;
  return a;
}

std::vector<GazePoint> cluster_at(double x, double y, int n, double dur,
                                  double spread, Rng& rng, double t0 = 0.0) {
  std::vector<GazePoint> t;
  for (int i = 0; i < n; ++i)
    t.push_back(GazePoint{t0 + 100.0 * i,
                          std::clamp(x + rng.gaussian(0.0, spread), 0.0, 127.0),
                          std::clamp(y + rng.gaussian(0.0, spread), 0.0, 127.0),
                          dur});
  return t;
}

}  // namespace

TEST_CASE("rasterize: empty trace gives all-zero heatmap", "[gaze]") {
  const auto hm = rasterize_gaze({}, 64, 64, 5.0);
  CHECK(hm.grid.maxCoeff() == 0.0);
  CHECK(hm.grid.minCoeff() == 0.0);
}

TEST_CASE("rasterize: single fixation peaks at its location", "[gaze]") {
  const auto hm = rasterize_gaze({GazePoint{0, 50, 50, 120}}, 100, 100, 6.0);
  Eigen::Index r, c;
  hm.grid.maxCoeff(&r, &c);
  CHECK(r == 50);
  CHECK(c == 50);
}

TEST_CASE("rasterize: matches direct evaluation, equal twin peaks", "[gaze]") {
  const std::vector<GazePoint> trace{GazePoint{0, 20, 20, 200},
                                     GazePoint{100, 80, 80, 200}};
  const auto hm = rasterize_gaze(trace, 100, 100, 5.0);
  const auto ref = direct_heatmap(trace, 100, 100, 5.0);
  CHECK(((hm.grid - ref).abs() / (1.0 + ref)).maxCoeff() < 1e-9);
  CHECK(std::abs(hm.grid(20, 20) - hm.grid(80, 80)) < 1e-9);
}

TEST_CASE("rasterize rejects out-of-bounds and unsorted traces", "[gaze]") {
  CHECK_THROWS_AS(rasterize_gaze({GazePoint{0, 200, 10, 5}}, 100, 100, 5.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      rasterize_gaze({GazePoint{50, 10, 10, 5}, GazePoint{0, 12, 12, 5}}, 100,
                     100, 5.0),
      std::invalid_argument);
}

TEST_CASE("threshold: all-zero heatmap gives all-false mask", "[gaze]") {
  GazeHeatmap hm{32, 32, 3.0, Eigen::ArrayXXd::Zero(32, 32)};
  const auto m = threshold_and_clean(hm, 0.3, 1.0);
  CHECK(masked_area(m) == 0.0);
}

TEST_CASE("threshold: single blob yields one component with peak", "[gaze]") {
  const auto hm = rasterize_gaze({GazePoint{0, 40, 30, 100}}, 64, 64, 4.0);
  const auto m = threshold_and_clean(hm, 0.3, 1.0);
  std::vector<int> labels, areas;
  CHECK(detail::label_components(m, labels, areas) == 1);
  CHECK(m.at(30, 40) == 1);
}

TEST_CASE("threshold: small components are removed", "[gaze]") {
  // hand-built heatmap: a 5x5 plateau and an isolated 3-pixel strip
  GazeHeatmap hm{20, 20, 1.0, Eigen::ArrayXXd::Zero(20, 20)};
  for (int r = 2; r < 7; ++r)
    for (int c = 2; c < 7; ++c) hm.grid(r, c) = 1.0;
  for (int c = 14; c < 17; ++c) hm.grid(12, c) = 1.0;
  const auto m = threshold_and_clean(hm, 0.5, 10.0);
  std::vector<int> labels, areas;
  REQUIRE(detail::label_components(m, labels, areas) == 1);
  CHECK(areas[0] == 25);
  CHECK(m.at(12, 15) == 0);
}

TEST_CASE("extract_boxes: empty and rectangle cases", "[gaze]") {
  BinaryMask empty{16, 16, std::vector<char>(256, 0)};
  CHECK(extract_boxes(empty).empty());

  BinaryMask m{100, 100, std::vector<char>(10000, 0)};
  for (int r = 10; r <= 19; ++r)
    for (int c = 20; c <= 39; ++c) m.set(r, c, 1);
  const auto boxes = extract_boxes(m);
  REQUIRE(boxes.size() == 1);
  const Corners k = to_corners(boxes[0]);
  CHECK_THAT(k.x1, Catch::Matchers::WithinAbs(0.20, 1e-12));
  CHECK_THAT(k.y1, Catch::Matchers::WithinAbs(0.10, 1e-12));
  CHECK_THAT(k.x2, Catch::Matchers::WithinAbs(0.40, 1e-12));
  CHECK_THAT(k.y2, Catch::Matchers::WithinAbs(0.20, 1e-12));
}

TEST_CASE("extract_boxes: disjoint components give disjoint boxes", "[gaze]") {
  BinaryMask m{50, 50, std::vector<char>(2500, 0)};
  for (int r = 5; r < 10; ++r)
    for (int c = 5; c < 10; ++c) m.set(r, c, 1);
  for (int r = 30; r < 40; ++r)
    for (int c = 30; c < 35; ++c) m.set(r, c, 1);
  const auto boxes = extract_boxes(m);
  REQUIRE(boxes.size() == 2);
  CHECK(iou(boxes[0], boxes[1]) == 0.0);
}

TEST_CASE("filter_gaze_only keeps below-threshold overlaps", "[gaze]") {
  const Box a = from_corners(0.0, 0.0, 0.2, 0.2);
  const Box b = from_corners(0.1, 0.1, 0.3, 0.3);  // IoU(a,b) = 1/7

  CHECK(filter_gaze_only({a, b}, {}, 0.2).size() == 2);
  CHECK(filter_gaze_only({a}, {a}, 0.9).empty());  // identical -> removed
  CHECK(filter_gaze_only({a}, {b}, 0.2).size() == 1);   // 1/7 < 0.2
  CHECK(filter_gaze_only({a}, {b}, 0.1).empty());       // 1/7 >= 0.1
  // category and order
  const auto kept = filter_gaze_only({a, b}, {}, 0.5);
  CHECK(kept[0].category == Category::gaze_only);
  CHECK(kept[0].box.cx == a.cx);
  CHECK(kept[1].box.cx == b.cx);
}

TEST_CASE("process_gaze: empty trace and candida-covered cluster", "[gaze]") {
  const GazeParams params;
  CHECK(process_gaze({}, {}, params, 128, 128).empty());

  Rng rng(5);
  const auto trace = cluster_at(64, 64, 8, 300, 2.0, rng);
  const Box candida = make_box(0.5, 0.5, 0.3, 0.3);
  CHECK(process_gaze(trace, {candida}, params, 128, 128).empty());
}

TEST_CASE("process_gaze: dwell cluster extent matches direct oracle",
          "[gaze]") {
  const GazeParams params;
  Rng rng(6);
  auto trace = cluster_at(40, 70, 10, 400, 2.0, rng);
  const Box candida = make_box(0.9, 0.1, 0.1, 0.1);  // far away

  const auto out = process_gaze(trace, {candida}, params, 128, 128);
  REQUIRE(out.size() == 1);

  // oracle: direct heatmap, relative threshold, tight mask extent
  const auto ref = direct_heatmap(trace, 128, 128, params.sigma_px);
  const double cut = params.tau_rel * ref.maxCoeff();
  int r0 = 128, r1 = -1, c0 = 128, c1 = -1;
  for (int r = 0; r < 128; ++r)
    for (int c = 0; c < 128; ++c)
      if (ref(r, c) >= cut) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  const Corners k = to_corners(out[0].box);
  const double px = 1.0 / 128.0;
  CHECK(std::abs(k.x1 - c0 * px) <= 2 * px);
  CHECK(std::abs(k.y1 - r0 * px) <= 2 * px);
  CHECK(std::abs(k.x2 - (c1 + 1) * px) <= 2 * px);
  CHECK(std::abs(k.y2 - (r1 + 1) * px) <= 2 * px);
}

TEST_CASE("process_gaze: deterministic and duration-scale invariant",
          "[gaze]") {
  const GazeParams params;
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GazePoint> trace;
    const int n_clusters = rng.uniform_int(1, 3);
    double t0 = 0.0;
    for (int k = 0; k < n_clusters; ++k) {
      auto c = cluster_at(rng.uniform(20, 108), rng.uniform(20, 108),
                          rng.uniform_int(4, 10), rng.uniform(100, 500), 2.5,
                          rng, t0);
      t0 += 10000.0;
      trace.insert(trace.end(), c.begin(), c.end());
    }
    const auto a = process_gaze(trace, {}, params, 128, 128);
    const auto b = process_gaze(trace, {}, params, 128, 128);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].box.cx == b[i].box.cx);
      CHECK(a[i].box.cy == b[i].box.cy);
      CHECK(a[i].box.w == b[i].box.w);
      CHECK(a[i].box.h == b[i].box.h);
    }

    // scaling all durations by a constant leaves the boxes unchanged
    auto scaled = trace;
    for (auto& p : scaled) p.dur_ms *= 7.5;
    const auto c = process_gaze(scaled, {}, params, 128, 128);
    REQUIRE(c.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(std::abs(c[i].box.cx - a[i].box.cx) < 1e-12);
  }
}

TEST_CASE("threshold/area monotonicity over random traces", "[gaze]") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GazePoint> trace;
    const int n = rng.uniform_int(2, 12);
    for (int i = 0; i < n; ++i)
      trace.push_back(GazePoint{100.0 * i, rng.uniform(0, 127.999),
                                rng.uniform(0, 127.999),
                                rng.uniform(50, 400)});
    const auto hm = rasterize_gaze(trace, 128, 128, 8.0);

    double prev_area = std::numeric_limits<double>::infinity();
    for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const double area = masked_area(threshold_and_clean(hm, tau, 1.0));
      CHECK(area <= prev_area);
      prev_area = area;
    }

    std::size_t prev_n = std::numeric_limits<std::size_t>::max();
    for (double min_area : {1.0, 16.0, 64.0, 256.0}) {
      const auto m = threshold_and_clean(hm, 0.3, min_area);
      const auto count = extract_boxes(m).size();
      CHECK(count <= prev_n);
      prev_n = count;
    }
  }
}

TEST_CASE("gaze csv round trip and header check", "[gaze]") {
  const std::string path = "/tmp/gazedetr_test_trace.gaze.csv";
  const std::vector<GazePoint> trace{GazePoint{0.0, 10.25, 20.5, 120.0},
                                     GazePoint{130.0, 30.0, 40.0, 80.0}};
  write_gaze_csv(path, trace);
  const auto back = read_gaze_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].x_px == 10.25);
  CHECK(back[1].dur_ms == 80.0);

  std::ofstream bad("/tmp/gazedetr_bad.csv");
  bad << "wrong,header\n";
  bad.close();
  CHECK_THROWS_AS(read_gaze_csv("/tmp/gazedetr_bad.csv"), std::runtime_error);
  CHECK_THROWS_AS(read_gaze_csv("/tmp/gazedetr_missing_file.csv"),
                  std::runtime_error);
}
