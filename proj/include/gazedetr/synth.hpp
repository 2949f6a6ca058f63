#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gazedetr/common.hpp"
#include "gazedetr/gaze.hpp"
#include "gazedetr/geometry.hpp"
#include "gazedetr/image.hpp"

namespace gazedetr {

struct SceneSpec {
  int h = 128, w = 128;
  int n_candida_min = 1, n_candida_max = 2;
  int n_confounder_min = 1, n_confounder_max = 2;
  int n_cells_min = 6, n_cells_max = 12;
  double noise_std = 5.0;
  std::uint64_t seed = 1;
};

inline void validate(const SceneSpec& s) {
  require(s.h >= 64 && s.w >= 64, "SceneSpec: image size must be >= 64");
  require(s.n_candida_min >= 0 && s.n_candida_max >= s.n_candida_min,
          "SceneSpec: bad candida count range");
  require(s.n_confounder_min >= 0 && s.n_confounder_max >= s.n_confounder_min,
          "SceneSpec: bad confounder count range");
  require(s.n_cells_min >= 0 && s.n_cells_max >= s.n_cells_min,
          "SceneSpec: bad cell count range");
  require(s.noise_std >= 0, "SceneSpec: noise_std must be >= 0");
}

struct Scene {
  Image8 image;
  std::vector<LabeledBox> candida;   // model supervision
  std::vector<Box> confounders;      // evaluation only, never shown to the model
  std::vector<GazePoint> gaze;
};

struct GazeSimParams {
  double dwell_ms_candida = 300.0;
  double dwell_ms_confounder = 500.0;
  int fix_per_object = 6;
  double jitter_px = 3.0;
  double background_fix_rate = 3.0;  // expected stray fixations per image
};

inline void validate(const GazeSimParams& p) {
  require(p.dwell_ms_candida >= 0 && p.dwell_ms_confounder >= 0 &&
              p.fix_per_object >= 0 && p.jitter_px >= 0 &&
              p.background_fix_rate >= 0,
          "GazeSimParams: all parameters must be >= 0");
}

namespace detail {

// Integer pixel extent accumulated while drawing one object.
struct Extent {
  int r0 = 1 << 30, c0 = 1 << 30, r1 = -1, c1 = -1;
  void add(int r, int c) {
    r0 = std::min(r0, r);
    c0 = std::min(c0, c);
    r1 = std::max(r1, r);
    c1 = std::max(c1, c);
  }
  bool empty() const { return r1 < 0; }
};

inline Box extent_to_box(const Extent& e, int h, int w) {
  return from_corners({e.c0 / double(w), e.r0 / double(h),
                       (e.c1 + 1) / double(w), (e.r1 + 1) / double(h)});
}

// Paint a filled disc; strokes sit on top of whatever is below.
inline void draw_disc(std::vector<double>& acc, int h, int w, double cx,
                      double cy, double radius, double amp, Extent* ext) {
  const int r_lo = std::max(0, int(std::floor(cy - radius)));
  const int r_hi = std::min(h - 1, int(std::ceil(cy + radius)));
  const int c_lo = std::max(0, int(std::floor(cx - radius)));
  const int c_hi = std::min(w - 1, int(std::ceil(cx + radius)));
  const double r2 = radius * radius;
  for (int r = r_lo; r <= r_hi; ++r)
    for (int c = c_lo; c <= c_hi; ++c) {
      const double dx = c - cx, dy = r - cy;
      const double d2 = dx * dx + dy * dy;
      if (d2 > r2) continue;
      const double v = amp * (1.0 - 0.2 * d2 / r2);
      double& px = acc[std::size_t(r) * w + c];
      px = std::max(px, v);
      if (ext) ext->add(r, c);
    }
}

// Soft additive blob (background cell clutter).
inline void draw_cell(std::vector<double>& acc, int h, int w, double cx,
                      double cy, double radius, double amp) {
  const int r_lo = std::max(0, int(std::floor(cy - radius)));
  const int r_hi = std::min(h - 1, int(std::ceil(cy + radius)));
  const int c_lo = std::max(0, int(std::floor(cx - radius)));
  const int c_hi = std::min(w - 1, int(std::ceil(cx + radius)));
  const double r2 = radius * radius;
  for (int r = r_lo; r <= r_hi; ++r)
    for (int c = c_lo; c <= c_hi; ++c) {
      const double dx = c - cx, dy = r - cy;
      const double t = (dx * dx + dy * dy) / r2;
      if (t >= 1.0) continue;
      acc[std::size_t(r) * w + c] += amp * (1.0 - t) * (1.0 - t);
    }
}

// Arc-like polyline: unit steps with a constant turn rate plus a little
// angular noise, recentred on its centroid. Retries until the pixel extent is
// compact on both axes, so object boxes stay chunky enough for gaze overlap.
inline std::vector<std::pair<double, double>> make_arc_polyline(Rng& rng) {
  std::vector<std::pair<double, double>> pts;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double radius = rng.uniform(13.0, 17.0);
    const double span = rng.uniform(2.6, 4.4);  // total turn, radians
    const double kappa = (rng.uniform() < 0.5 ? -1.0 : 1.0) * span;
    const int n = std::max(8, int(std::lround(span * radius)));
    double theta = rng.uniform(0.0, 2.0 * 3.141592653589793);
    double x = 0.0, y = 0.0;
    pts.clear();
    pts.reserve(std::size_t(n) + 1);
    pts.emplace_back(x, y);
    for (int i = 0; i < n; ++i) {
      x += std::cos(theta);
      y += std::sin(theta);
      theta += kappa / n + rng.gaussian(0.0, 0.02);
      pts.emplace_back(x, y);
    }
    double mx = 0, my = 0;
    for (auto& p : pts) {
      mx += p.first;
      my += p.second;
    }
    mx /= pts.size();
    my /= pts.size();
    double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
    for (auto& p : pts) {
      p.first -= mx;
      p.second -= my;
      x0 = std::min(x0, p.first);
      x1 = std::max(x1, p.first);
      y0 = std::min(y0, p.second);
      y1 = std::max(y1, p.second);
    }
    const double sx = x1 - x0, sy = y1 - y0;
    if (sx >= 18.0 && sx <= 42.0 && sy >= 18.0 && sy <= 42.0) return pts;
  }
  return pts;  // last attempt; bounds rejection upstream keeps it in frame
}

inline double polyline_length(const std::vector<std::pair<double, double>>& p) {
  double len = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    len += std::hypot(p[i].first - p[i - 1].first,
                      p[i].second - p[i - 1].second);
  return len;
}

// Point at arc length s along the polyline (unit-ish segment lengths).
inline std::pair<double, double> point_at(
    const std::vector<std::pair<double, double>>& p, double s) {
  double acc = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double seg = std::hypot(p[i].first - p[i - 1].first,
                                  p[i].second - p[i - 1].second);
    if (acc + seg >= s && seg > 0) {
      const double t = (s - acc) / seg;
      return {p[i - 1].first + t * (p[i].first - p[i - 1].first),
              p[i - 1].second + t * (p[i].second - p[i - 1].second)};
    }
    acc += seg;
  }
  return p.back();
}

// Pick an object centre at least min_dist from all previous centres. Returns
// false when no spot is found (the object is skipped, keeping scenes valid).
inline bool place_center(Rng& rng, int h, int w,
                         const std::vector<std::pair<double, double>>& taken,
                         double min_dist, std::pair<double, double>* out) {
  const double margin = 27.0;
  for (int t = 0; t < 300; ++t) {
    const double cx = rng.uniform(margin, w - margin);
    const double cy = rng.uniform(margin, h - margin);
    bool ok = true;
    for (const auto& q : taken) {
      const double d = std::hypot(cx - q.first, cy - q.second);
      if (d < min_dist) {
        ok = false;
        break;
      }
    }
    if (ok) {
      *out = {cx, cy};
      return true;
    }
  }
  return false;
}

}  // namespace detail

// Candida render as beaded (pseudohypha-like) arcs: bright discs at regular
// arc spacing with visible constrictions between them. Confounders are the
// same arcs drawn as continuous strokes (no constrictions) or sharp cell-edge
// arcs hugging a faint disc. Cells and noise are background clutter.
inline Scene generate_scene(const SceneSpec& spec, Rng& rng) {
  validate(spec);
  const int h = spec.h, w = spec.w;
  Scene scene;
  std::vector<double> acc(std::size_t(h) * w, 28.0);

  const int n_cells = rng.uniform_int(spec.n_cells_min, spec.n_cells_max);
  for (int i = 0; i < n_cells; ++i) {
    const double cx = rng.uniform(6.0, w - 6.0);
    const double cy = rng.uniform(6.0, h - 6.0);
    const double radius = rng.uniform(5.0, 12.0);
    const double amp = rng.uniform(14.0, 32.0);
    detail::draw_cell(acc, h, w, cx, cy, radius, amp);
  }

  std::vector<std::pair<double, double>> centers;
  const double kMinDist = 48.0;

  const int n_candida = rng.uniform_int(spec.n_candida_min, spec.n_candida_max);
  for (int i = 0; i < n_candida; ++i) {
    std::pair<double, double> c;
    if (!detail::place_center(rng, h, w, centers, kMinDist, &c)) continue;
    centers.push_back(c);
    const auto poly = detail::make_arc_polyline(rng);
    const double len = detail::polyline_length(poly);
    const double spacing = rng.uniform(5.0, 5.6);
    const double amp0 = rng.uniform(160.0, 205.0);
    detail::Extent ext;
    for (double s = spacing * 0.5; s < len; s += spacing) {
      const auto p = detail::point_at(poly, s);
      const double radius = rng.uniform(1.5, 1.9);
      const double amp = std::clamp(amp0 + rng.uniform(-12.0, 12.0), 148.0, 215.0);
      detail::draw_disc(acc, h, w, c.first + p.first, c.second + p.second,
                        radius, amp, &ext);
    }
    if (!ext.empty())
      scene.candida.push_back(
          {detail::extent_to_box(ext, h, w), Category::candida});
  }

  const int n_conf = rng.uniform_int(spec.n_confounder_min, spec.n_confounder_max);
  for (int i = 0; i < n_conf; ++i) {
    std::pair<double, double> c;
    if (!detail::place_center(rng, h, w, centers, kMinDist, &c)) continue;
    centers.push_back(c);
    const auto poly = detail::make_arc_polyline(rng);
    const bool cell_edge = rng.uniform() < 0.5;
    if (cell_edge)  // faint body the bright rim belongs to
      detail::draw_cell(acc, h, w, c.first, c.second,
                        rng.uniform(10.0, 14.0), 12.0);
    const double width = rng.uniform(2.6, 3.4);
    const double amp = rng.uniform(160.0, 205.0);
    detail::Extent ext;
    const double len = detail::polyline_length(poly);
    for (double s = 0.0; s <= len; s += 0.7) {
      const auto p = detail::point_at(poly, s);
      detail::draw_disc(acc, h, w, c.first + p.first, c.second + p.second,
                        width * 0.5, amp, &ext);
    }
    if (!ext.empty()) scene.confounders.push_back(detail::extent_to_box(ext, h, w));
  }

  scene.image = Image8(h, w);
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col) {
      const double v = acc[std::size_t(r) * w + col] +
                       rng.gaussian(0.0, spec.noise_std);
      scene.image.set(r, col,
                      std::uint8_t(std::clamp(std::lround(v), 0L, 255L)));
    }
  return scene;
}

// Fixation clusters over each candida and (longer dwells) each confounder,
// plus sparse short background fixations. Durations scale linearly with the
// dwell means, so scaling both means rescales the whole trace.
inline std::vector<GazePoint> simulate_gaze(const Scene& scene,
                                            const GazeSimParams& params,
                                            Rng& rng) {
  validate(params);
  const int h = scene.image.h, w = scene.image.w;
  require(h > 0 && w > 0, "simulate_gaze: scene has no image");
  std::vector<GazePoint> trace;
  double t = 0.0;
  auto clamp_x = [&](double x) { return std::clamp(x, 0.0, w - 1e-3); };
  auto clamp_y = [&](double y) { return std::clamp(y, 0.0, h - 1e-3); };
  auto emit_cluster = [&](const Box& b, double dwell_mean) {
    for (int i = 0; i < params.fix_per_object; ++i) {
      const double g = std::clamp(rng.gaussian(), -3.0, 3.0);
      const double dur = dwell_mean * (1.0 + 0.25 * g);
      const double x = clamp_x(b.cx * w + rng.gaussian(0.0, params.jitter_px));
      const double y = clamp_y(b.cy * h + rng.gaussian(0.0, params.jitter_px));
      t += rng.uniform(40.0, 120.0);
      trace.push_back({t, x, y, dur});
      t += dur;
    }
  };
  for (const auto& lb : scene.candida) emit_cluster(lb.box, params.dwell_ms_candida);
  for (const auto& b : scene.confounders) emit_cluster(b, params.dwell_ms_confounder);

  const double mean_dwell =
      0.5 * (params.dwell_ms_candida + params.dwell_ms_confounder);
  int n_bg = int(std::floor(params.background_fix_rate));
  if (rng.uniform() < params.background_fix_rate - n_bg) ++n_bg;
  for (int i = 0; i < n_bg; ++i) {
    const double dur = mean_dwell * rng.uniform(0.08, 0.22);
    const double x = rng.uniform(0.0, w - 1e-3);
    const double y = rng.uniform(0.0, h - 1e-3);
    t += rng.uniform(40.0, 120.0);
    trace.push_back({t, x, y, dur});
    t += dur;
  }
  validate_trace(trace, h, w);
  return trace;
}

// --------------------------------------------------------------------------
// dataset on disk: images/<id>.png, annotations.json, gaze/<id>.gaze.csv,
// manifest.json

struct SceneRecord {
  std::string id;
  Scene scene;
};

struct Dataset {
  std::vector<SceneRecord> records;
  std::vector<int> train, val, test;  // indices into records
  std::uint64_t seed = 0;
  nlohmann::json generator;  // parameters echoed into the manifest
};

// train/val/test 3:1:1 by per-index hash order.
inline std::array<std::vector<int>, 3> split_indices(int n, std::uint64_t seed) {
  require(n >= 0, "split_indices: negative count");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ka = hash_combine(seed, static_cast<std::uint64_t>(a));
    const auto kb = hash_combine(seed, static_cast<std::uint64_t>(b));
    return ka != kb ? ka < kb : a < b;
  });
  const int n_train = 3 * n / 5;
  const int n_val = n / 5;
  std::array<std::vector<int>, 3> out;
  for (int i = 0; i < n; ++i) {
    auto& bucket = i < n_train ? out[0] : (i < n_train + n_val ? out[1] : out[2]);
    bucket.push_back(order[static_cast<std::size_t>(i)]);
  }
  for (auto& b : out) std::sort(b.begin(), b.end());
  return out;
}

inline std::string scene_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05d", index);
  return buf;
}

inline Dataset build_dataset(const SceneSpec& spec, const GazeSimParams& gaze,
                             int n_scenes) {
  validate(spec);
  validate(gaze);
  require(n_scenes >= 0, "build_dataset: negative scene count");
  Dataset ds;
  ds.seed = spec.seed;
  ds.generator = {
      {"h", spec.h},
      {"w", spec.w},
      {"n_candida_min", spec.n_candida_min},
      {"n_candida_max", spec.n_candida_max},
      {"n_confounder_min", spec.n_confounder_min},
      {"n_confounder_max", spec.n_confounder_max},
      {"n_cells_min", spec.n_cells_min},
      {"n_cells_max", spec.n_cells_max},
      {"noise_std", spec.noise_std},
      {"dwell_ms_candida", gaze.dwell_ms_candida},
      {"dwell_ms_confounder", gaze.dwell_ms_confounder},
      {"fix_per_object", gaze.fix_per_object},
      {"jitter_px", gaze.jitter_px},
      {"background_fix_rate", gaze.background_fix_rate},
  };
  ds.records.reserve(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) {
    Rng rng = derive_rng(spec.seed, static_cast<std::uint64_t>(i));
    Scene s = generate_scene(spec, rng);
    s.gaze = simulate_gaze(s, gaze, rng);
    ds.records.push_back({scene_id(i), std::move(s)});
  }
  auto splits = split_indices(n_scenes, spec.seed);
  ds.train = std::move(splits[0]);
  ds.val = std::move(splits[1]);
  ds.test = std::move(splits[2]);
  return ds;
}

namespace detail {

inline nlohmann::json box_to_json(const Box& b) {
  return nlohmann::json::array({b.cx, b.cy, b.w, b.h});
}

inline Box box_from_json(const nlohmann::json& j, const std::string& where) {
  check_state(j.is_array() && j.size() == 4, "bad box entry in " + where);
  return make_box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                  j[3].get<double>());
}

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  check_state(in.good(), "missing file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  check_state(!j.is_discarded(), "corrupt JSON: " + path);
  return j;
}

inline void dump_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  check_state(out.good(), "cannot open for write: " + path);
  out << j.dump(2) << "\n";
  check_state(out.good(), "write failed: " + path);
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "gaze");
  nlohmann::json images = nlohmann::json::array();
  for (const auto& rec : ds.records) {
    const auto& s = rec.scene;
    write_png((fs::path(dir) / "images" / (rec.id + ".png")).string(), s.image);
    write_gaze_csv((fs::path(dir) / "gaze" / (rec.id + ".gaze.csv")).string(),
                   s.gaze);
    nlohmann::json cand = nlohmann::json::array();
    for (const auto& lb : s.candida) cand.push_back(detail::box_to_json(lb.box));
    nlohmann::json conf = nlohmann::json::array();
    for (const auto& b : s.confounders) conf.push_back(detail::box_to_json(b));
    images.push_back({{"id", rec.id},
                      {"width", s.image.w},
                      {"height", s.image.h},
                      {"candida", cand},
                      {"confounders", conf}});
  }
  detail::dump_json({{"images", images}},
                    (fs::path(dir) / "annotations.json").string());
  auto ids_of = [&](const std::vector<int>& idx) {
    nlohmann::json a = nlohmann::json::array();
    for (int i : idx) a.push_back(ds.records[static_cast<std::size_t>(i)].id);
    return a;
  };
  detail::dump_json({{"seed", ds.seed},
                     {"n_scenes", ds.records.size()},
                     {"generator", ds.generator},
                     {"splits",
                      {{"train", ids_of(ds.train)},
                       {"val", ids_of(ds.val)},
                       {"test", ids_of(ds.test)}}}},
                    (fs::path(dir) / "manifest.json").string());
}

inline Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) {
    const bool empty = !fs::exists(dir) || fs::is_empty(dir);
    check_state(empty, "dataset directory has files but no manifest.json: " + dir);
    return {};
  }
  Dataset ds;
  const auto manifest = detail::load_json(manifest_path.string());
  check_state(manifest.contains("seed") && manifest.contains("splits"),
              "manifest.json missing keys: " + manifest_path.string());
  ds.seed = manifest["seed"].get<std::uint64_t>();
  if (manifest.contains("generator")) ds.generator = manifest["generator"];

  const auto ann_path = (fs::path(dir) / "annotations.json").string();
  const auto ann = detail::load_json(ann_path);
  check_state(ann.contains("images") && ann["images"].is_array(),
              "annotations.json missing image list: " + ann_path);
  std::map<std::string, int> index_of;
  for (const auto& entry : ann["images"]) {
    SceneRecord rec;
    rec.id = entry["id"].get<std::string>();
    const std::string img_path =
        (fs::path(dir) / "images" / (rec.id + ".png")).string();
    rec.scene.image = read_png(img_path);
    check_state(rec.scene.image.w == entry["width"].get<int>() &&
                    rec.scene.image.h == entry["height"].get<int>(),
                "annotation size disagrees with image: " + img_path);
    for (const auto& jb : entry["candida"])
      rec.scene.candida.push_back(
          {detail::box_from_json(jb, ann_path), Category::candida});
    for (const auto& jb : entry["confounders"])
      rec.scene.confounders.push_back(detail::box_from_json(jb, ann_path));
    rec.scene.gaze = read_gaze_csv(
        (fs::path(dir) / "gaze" / (rec.id + ".gaze.csv")).string());
    index_of[rec.id] = static_cast<int>(ds.records.size());
    ds.records.push_back(std::move(rec));
  }
  auto resolve = [&](const nlohmann::json& ids, std::vector<int>* out) {
    for (const auto& id : ids) {
      auto it = index_of.find(id.get<std::string>());
      check_state(it != index_of.end(), "manifest names unknown scene " +
                                            id.get<std::string>() + " in " +
                                            manifest_path.string());
      out->push_back(it->second);
    }
  };
  resolve(manifest["splits"]["train"], &ds.train);
  resolve(manifest["splits"]["val"], &ds.val);
  resolve(manifest["splits"]["test"], &ds.test);
  return ds;
}

}  // namespace gazedetr
