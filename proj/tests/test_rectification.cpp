#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gazedetr/detector.hpp"
#include "gazedetr/rectify.hpp"

using namespace gazedetr;
using Catch::Approx;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 2;
  c.n_learnable_queries = 8;
  c.query_budget = 8;
  c.feature_stride = 8;
  return c;
}

Image8 noise_image(int h, int w, std::uint64_t seed) {
  Image8 img(h, w);
  Rng rng(seed);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      img.set(r, c, static_cast<std::uint8_t>(rng.uniform_int(0, 255)));
  return img;
}

// hand-built proposals with strictly decreasing scores
Detector<float>::Proposals fake_proposals(Tape<float>& t, int n, int d,
                                          std::uint64_t seed) {
  Detector<float>::Proposals p;
  Rng rng(seed);
  Tape<float>::Mat m(n, d);
  for (int i = 0; i < n; ++i) {
    p.anchors.push_back(clip_box(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                                 rng.uniform(0.05, 0.4),
                                 rng.uniform(0.05, 0.4)));
    p.scores.push_back(float(10.0 - i));
    p.token_index.push_back(i);
    for (int j = 0; j < d; ++j) m(i, j) = float(rng.gaussian(0.0, 1.0));
  }
  p.contents = t.input(m, true);
  return p;
}

}  // namespace

TEST_CASE("jitter replica count and draw order", "[rectify]") {
  JitterParams p;  // K=4
  std::vector<Box> gaze = {clip_box(0.3, 0.4, 0.2, 0.25),
                           clip_box(0.7, 0.6, 0.15, 0.3)};
  Rng rng(11);
  const auto out = replicate_and_jitter(gaze, p, rng);
  REQUIRE(out.size() == 8);

  // replaying the same stream by hand reproduces the boxes in order
  Rng replay(11);
  for (int b = 0; b < 2; ++b)
    for (int rep = 0; rep < 4; ++rep) {
      const double ex = replay.gaussian(0.0, p.sigma_x);
      const double ey = replay.gaussian(0.0, p.sigma_y);
      const double ew = replay.gaussian(0.0, p.sigma_w);
      const double eh = replay.gaussian(0.0, p.sigma_h);
      const Box want = clip_box(gaze[b].cx + ex, gaze[b].cy + ey,
                                gaze[b].w + ew, gaze[b].h + eh);
      const Box& got = out[static_cast<std::size_t>(b * 4 + rep)];
      REQUIRE(got.cx == want.cx);
      REQUIRE(got.cy == want.cy);
      REQUIRE(got.w == want.w);
      REQUIRE(got.h == want.h);
    }
}

TEST_CASE("zero sigma jitter copies boxes exactly", "[rectify]") {
  JitterParams p;
  p.sigma_x = p.sigma_y = p.sigma_w = p.sigma_h = 0.0;
  p.k = 3;
  std::vector<Box> gaze = {clip_box(0.25, 0.5, 0.3, 0.2)};
  Rng rng(5);
  const auto out = replicate_and_jitter(gaze, p, rng);
  REQUIRE(out.size() == 3);
  for (const Box& b : out) {
    REQUIRE(b.cx == gaze[0].cx);
    REQUIRE(b.cy == gaze[0].cy);
    REQUIRE(b.w == gaze[0].w);
    REQUIRE(b.h == gaze[0].h);
  }
}

TEST_CASE("jitter matches its nominal distribution", "[rectify]") {
  // a center box far from the clip boundary so clipping never interferes
  JitterParams p;
  p.k = 1;
  p.max_gaze_queries = 1 << 20;
  const Box base = clip_box(0.5, 0.5, 0.3, 0.3);
  const int n = 100000;
  std::vector<Box> gaze(static_cast<std::size_t>(n), base);
  Rng rng(77);
  const auto out = replicate_and_jitter(gaze, p, rng);
  REQUIRE(out.size() == static_cast<std::size_t>(n));

  auto stats = [&](auto get, double center) {
    double mean = 0.0;
    for (const Box& b : out) mean += get(b) - center;
    mean /= n;
    double var = 0.0;
    for (const Box& b : out) {
      const double d = get(b) - center - mean;
      var += d * d;
    }
    var /= (n - 1);
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  const double sigma = 0.02;
  const double mean_tol = 4.0 * sigma / std::sqrt(double(n));
  auto [mx, sx] = stats([](const Box& b) { return b.cx; }, base.cx);
  auto [my, sy] = stats([](const Box& b) { return b.cy; }, base.cy);
  auto [mw, sw] = stats([](const Box& b) { return b.w; }, base.w);
  auto [mh, sh] = stats([](const Box& b) { return b.h; }, base.h);
  for (double m : {mx, my, mw, mh}) REQUIRE(std::abs(m) <= mean_tol);
  for (double s : {sx, sy, sw, sh})
    REQUIRE(s == Approx(sigma).epsilon(0.02));
}

TEST_CASE("jittered boxes are always valid even near the boundary",
          "[rectify]") {
  JitterParams p;
  p.sigma_x = p.sigma_y = p.sigma_w = p.sigma_h = 0.3;  // violent jitter
  p.k = 8;
  p.max_gaze_queries = 1 << 20;
  std::vector<Box> gaze = {clip_box(0.02, 0.02, 0.03, 0.03),
                           clip_box(0.98, 0.98, 0.03, 0.03),
                           clip_box(0.5, 0.01, 0.9, 0.01)};
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const auto out = replicate_and_jitter(gaze, p, rng);
    REQUIRE(out.size() == 24);
    for (const Box& b : out) REQUIRE(box_valid(b));
  }
}

TEST_CASE("truncation keeps the earliest replicas", "[rectify]") {
  JitterParams capped;
  capped.max_gaze_queries = 10;
  JitterParams uncapped;
  uncapped.max_gaze_queries = 1 << 20;
  std::vector<Box> gaze(5, clip_box(0.5, 0.5, 0.2, 0.2));  // 5*4 = 20 replicas

  Rng r1(9), r2(9);
  const auto full = replicate_and_jitter(gaze, uncapped, r1);
  const auto cut = replicate_and_jitter(gaze, capped, r2);
  REQUIRE(full.size() == 20);
  REQUIRE(cut.size() == 10);
  for (std::size_t i = 0; i < cut.size(); ++i) {
    REQUIRE(cut[i].cx == full[i].cx);
    REQUIRE(cut[i].cy == full[i].cy);
    REQUIRE(cut[i].w == full[i].w);
    REQUIRE(cut[i].h == full[i].h);
  }
}

TEST_CASE("class flip gathers the candida embedding row", "[rectify]") {
  Tape<float> t;
  Rng rng(3);
  Tape<float>::Mat table(kNumClasses, 6);
  for (int i = 0; i < table.size(); ++i)
    table.data()[i] = float(rng.gaussian(0.0, 1.0));
  const auto tab = t.input(table, true);

  SECTION("zero gaze boxes give an empty content block") {
    const auto flipped = flip_class_content(t, tab, 0);
    REQUIRE(t.value(flipped).rows() == 0);
    REQUIRE(t.value(flipped).cols() == 6);
  }

  SECTION("all rows equal the candida row exactly") {
    const auto flipped = t.value(flip_class_content(t, tab, 5)).eval();
    REQUIRE(flipped.rows() == 5);
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 6; ++c)
        REQUIRE(flipped(r, c) == table(kClassCandida, c));
  }
}

TEST_CASE("attention mask blocks exactly learnable-to-gaze", "[rectify]") {
  SECTION("one of each") {
    const std::vector<QueryOrigin> flags = {QueryOrigin::gaze,
                                            QueryOrigin::learnable};
    const auto mask = build_attention_mask(flags);
    REQUIRE(mask.size() == 4);
    REQUIRE(mask[0 * 2 + 0] == 0);  // gaze sees itself
    REQUIRE(mask[0 * 2 + 1] == 0);  // gaze sees learnable
    REQUIRE(mask[1 * 2 + 0] == 1);  // learnable must not see gaze
    REQUIRE(mask[1 * 2 + 1] == 0);
  }

  SECTION("all learnable blocks nothing") {
    const std::vector<QueryOrigin> flags(7, QueryOrigin::learnable);
    const auto mask = build_attention_mask(flags);
    REQUIRE(std::count(mask.begin(), mask.end(), char(1)) == 0);
  }

  SECTION("blocked count is #learnable * #gaze with a clear diagonal") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      const int q = int(rng.uniform_int(1, 24));
      std::vector<QueryOrigin> flags;
      int n_gaze = 0;
      for (int i = 0; i < q; ++i) {
        const bool g = rng.uniform() < 0.4;
        flags.push_back(g ? QueryOrigin::gaze : QueryOrigin::learnable);
        n_gaze += g;
      }
      const auto mask = build_attention_mask(flags);
      const long want =
          long(n_gaze) * (q - n_gaze);
      REQUIRE(std::count(mask.begin(), mask.end(), char(1)) == want);
      for (int i = 0; i < q; ++i)
        REQUIRE(mask[std::size_t(i) * q + i] == 0);
    }
  }
}

TEST_CASE("query selection fills the budget with gaze first", "[rectify]") {
  Tape<float> t;
  const int d = 16, q_budget = 12;
  const auto props = fake_proposals(t, 20, d, 42);

  std::vector<Box> gaze = {clip_box(0.2, 0.2, 0.1, 0.1),
                           clip_box(0.8, 0.8, 0.2, 0.2),
                           clip_box(0.5, 0.5, 0.3, 0.3)};
  Rng rng(1);
  Tape<float>::Mat table(kNumClasses, d);
  for (int i = 0; i < table.size(); ++i)
    table.data()[i] = float(rng.gaussian(0.0, 1.0));
  const auto tab = t.input(table, true);
  const auto contents = flip_class_content(t, tab, int(gaze.size()));

  const auto qs = select_queries(t, props, gaze, contents, q_budget);
  REQUIRE(qs.size() == q_budget);
  REQUIRE(qs.anchors.size() == std::size_t(q_budget));
  REQUIRE(qs.origin.size() == std::size_t(q_budget));
  REQUIRE(qs.mask.size() == std::size_t(q_budget) * q_budget);

  // gaze rows lead, learnable follow in proposal (score) order
  for (int i = 0; i < 3; ++i) {
    REQUIRE(qs.origin[std::size_t(i)] == QueryOrigin::gaze);
    REQUIRE(qs.anchors[std::size_t(i)].cx == gaze[std::size_t(i)].cx);
  }
  for (int i = 3; i < q_budget; ++i) {
    REQUIRE(qs.origin[std::size_t(i)] == QueryOrigin::learnable);
    REQUIRE(qs.anchors[std::size_t(i)].cx == props.anchors[std::size_t(i - 3)].cx);
    REQUIRE(qs.anchors[std::size_t(i)].w == props.anchors[std::size_t(i - 3)].w);
  }

  // contents: gaze block is the flipped embedding, learnable block the top rows
  const auto got = t.value(qs.contents).eval();
  const auto want_learn = t.value(props.contents).eval();
  REQUIRE(got.rows() == q_budget);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < d; ++c)
      REQUIRE(got(r, c) == table(kClassCandida, c));
  for (int r = 3; r < q_budget; ++r)
    for (int c = 0; c < d; ++c) REQUIRE(got(r, c) == want_learn(r - 3, c));

  // mask blocks exactly learnable->gaze
  const auto want_mask = build_attention_mask(qs.origin);
  REQUIRE(qs.mask == want_mask);
}

TEST_CASE("query selection rejects a gaze overflow", "[rectify]") {
  Tape<float> t;
  const auto props = fake_proposals(t, 8, 4, 7);
  std::vector<Box> gaze(6, clip_box(0.5, 0.5, 0.2, 0.2));
  Tape<float>::Mat table = Tape<float>::Mat::Ones(kNumClasses, 4);
  const auto tab = t.input(table, true);

  const auto c6 = flip_class_content(t, tab, 6);
  REQUIRE_THROWS_AS(select_queries(t, props, gaze, c6, 6),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(select_queries(t, props, gaze, c6, 5),
                    std::invalid_argument);
  REQUIRE_NOTHROW(select_queries(t, props, gaze, c6, 7));

  SECTION("and insufficient proposals") {
    const auto c2 = flip_class_content(t, tab, 2);
    std::vector<Box> two(2, clip_box(0.5, 0.5, 0.2, 0.2));
    REQUIRE_THROWS_WITH(select_queries(t, props, two, c2, 16),
                        Catch::Matchers::ContainsSubstring("proposals"));
  }
}

TEST_CASE("all gaze queries survive selection whenever they fit", "[rectify]") {
  Rng rng(0x5eed);
  for (int trial = 0; trial < 300; ++trial) {
    Tape<float> t;
    const int d = 8;
    const int q_budget = int(rng.uniform_int(2, 32));
    const int n_gaze = int(rng.uniform_int(0, q_budget - 1));
    const int n_props = q_budget + int(rng.uniform_int(0, 8));
    const auto props = fake_proposals(t, n_props, d, 1000 + trial);
    std::vector<Box> gaze;
    for (int i = 0; i < n_gaze; ++i)
      gaze.push_back(clip_box(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                              rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3)));
    Tape<float>::Mat table = Tape<float>::Mat::Ones(kNumClasses, d);
    const auto tab = t.input(table, true);
    const auto contents = flip_class_content(t, tab, n_gaze);
    const auto qs = select_queries(t, props, gaze, contents, q_budget);
    REQUIRE(qs.size() == q_budget);
    int seen_gaze = 0;
    for (const auto& o : qs.origin) seen_gaze += o == QueryOrigin::gaze;
    REQUIRE(seen_gaze == n_gaze);
    for (int i = 0; i < n_gaze; ++i) {
      REQUIRE(qs.origin[std::size_t(i)] == QueryOrigin::gaze);
      REQUIRE(qs.anchors[std::size_t(i)].cx == gaze[std::size_t(i)].cx);
    }
  }
}

TEST_CASE("selection with zero gaze boxes matches the inference path",
          "[rectify]") {
  const ModelConfig cfg = tiny_config();
  Detector<float> det(cfg, 31);
  const Image8 img = noise_image(64, 64, 8);

  Tape<float> t;
  const auto bound = bind_params(t, det.params);
  const auto mem = det.backbone_encode(t, bound, img);
  const auto props = det.init_learnable_queries(t, bound, mem);

  const auto plain = det.plain_queries(t, props);
  const auto tab = det.label_embedding(bound);
  const auto empty_contents = flip_class_content(t, tab, 0);
  const auto selected =
      select_queries(t, props, {}, empty_contents, cfg.query_budget);

  REQUIRE(selected.size() == plain.size());
  REQUIRE(selected.origin == plain.origin);
  REQUIRE(selected.mask == plain.mask);
  for (std::size_t i = 0; i < plain.anchors.size(); ++i) {
    REQUIRE(selected.anchors[i].cx == plain.anchors[i].cx);
    REQUIRE(selected.anchors[i].cy == plain.anchors[i].cy);
    REQUIRE(selected.anchors[i].w == plain.anchors[i].w);
    REQUIRE(selected.anchors[i].h == plain.anchors[i].h);
  }

  const auto dec_a = det.decode(t, bound, plain, mem);
  const auto dec_b = det.decode(t, bound, selected, mem);
  for (std::size_t l = 0; l < dec_a.logits.size(); ++l) {
    REQUIRE(t.value(dec_a.logits[l]) == t.value(dec_b.logits[l]));
    REQUIRE(t.value(dec_a.boxes[l]) == t.value(dec_b.boxes[l]));
  }
}
