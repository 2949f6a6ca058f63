#pragma once

#include <string>
#include <vector>

#include "gazedetr/common.hpp"
#include "gazedetr/detector.hpp"
#include "gazedetr/geometry.hpp"

namespace gazedetr {

struct JitterParams {
  double sigma_x = 0.02, sigma_y = 0.02;  // normalized units
  double sigma_w = 0.02, sigma_h = 0.02;
  int k = 4;                 // replicas per gaze-only box
  int max_gaze_queries = 32; // hard cap, must stay below the query budget
};

inline void validate(const JitterParams& p) {
  require(p.sigma_x >= 0 && p.sigma_y >= 0 && p.sigma_w >= 0 && p.sigma_h >= 0,
          "JitterParams: sigmas must be >= 0");
  require(p.k >= 1, "JitterParams: K must be >= 1");
  require(p.max_gaze_queries >= 1, "JitterParams: max_gaze_queries >= 1");
}

// K jittered replicas per box, clipped back to validity, truncated to the cap
// keeping the earliest. Draw order: per box, per replica, (ex, ey, ew, eh).
inline std::vector<Box> replicate_and_jitter(const std::vector<Box>& gaze_only,
                                             const JitterParams& p, Rng& rng) {
  validate(p);
  std::vector<Box> out;
  out.reserve(gaze_only.size() * static_cast<std::size_t>(p.k));
  for (const Box& b : gaze_only) {
    require(box_valid(b), "replicate_and_jitter: invalid input box");
    for (int rep = 0; rep < p.k; ++rep) {
      const double ex = rng.gaussian(0.0, p.sigma_x);
      const double ey = rng.gaussian(0.0, p.sigma_y);
      const double ew = rng.gaussian(0.0, p.sigma_w);
      const double eh = rng.gaussian(0.0, p.sigma_h);
      out.push_back(clip_box(b.cx + ex, b.cy + ey, b.w + ew, b.h + eh));
    }
  }
  if (out.size() > static_cast<std::size_t>(p.max_gaze_queries))
    out.resize(static_cast<std::size_t>(p.max_gaze_queries));
  return out;
}

// Every gaze query carries the shared candida label embedding: the class flip.
template <typename S>
typename Tape<S>::Var flip_class_content(Tape<S>& t,
                                         typename Tape<S>::Var label_embeddings,
                                         int n_gaze) {
  require(n_gaze >= 0, "flip_class_content: negative count");
  require(t.value(label_embeddings).rows() >= kNumClasses,
          "flip_class_content: label embedding table too small");
  return t.gather_rows(label_embeddings,
                       std::vector<int>(static_cast<std::size_t>(n_gaze),
                                        kClassCandida));
}

// Blocked = learnable row attending to a gaze column. The diagonal can never
// be blocked because a query shares its own origin.
inline std::vector<char> build_attention_mask(
    const std::vector<QueryOrigin>& flags) {
  const std::size_t q = flags.size();
  std::vector<char> mask(q * q, 0);
  for (std::size_t r = 0; r < q; ++r)
    for (std::size_t c = 0; c < q; ++c)
      mask[r * q + c] = flags[r] == QueryOrigin::learnable &&
                        flags[c] == QueryOrigin::gaze;
  return mask;
}

// All gaze queries first, then the top learnable proposals up to the budget.
template <typename S>
QuerySet<S> select_queries(Tape<S>& t,
                           const typename Detector<S>::Proposals& learnable,
                           const std::vector<Box>& gaze_anchors,
                           typename Tape<S>::Var gaze_contents,
                           int query_budget) {
  const int n_gaze = static_cast<int>(gaze_anchors.size());
  require(n_gaze < query_budget,
          "select_queries: gaze queries must not fill the whole budget (got " +
              std::to_string(n_gaze) + " of " + std::to_string(query_budget) +
              ")");
  require(t.value(gaze_contents).rows() == n_gaze,
          "select_queries: one content row per gaze box");
  const int n_keep = query_budget - n_gaze;
  require(static_cast<int>(learnable.anchors.size()) >= n_keep,
          "select_queries: not enough learnable proposals to fill the "
          "budget; raise n_learnable_queries");
  for (std::size_t i = 1; i < learnable.scores.size(); ++i)
    require(learnable.scores[i - 1] >= learnable.scores[i],
            "select_queries: proposals must be sorted by score");

  QuerySet<S> qs;
  qs.anchors = gaze_anchors;
  qs.anchors.insert(qs.anchors.end(), learnable.anchors.begin(),
                    learnable.anchors.begin() + n_keep);
  qs.contents = n_gaze == 0
                    ? (n_keep == static_cast<int>(learnable.anchors.size())
                           ? learnable.contents
                           : t.slice_rows(learnable.contents, 0, n_keep))
                    : t.concat_rows(gaze_contents,
                                    t.slice_rows(learnable.contents, 0, n_keep));
  qs.origin.assign(static_cast<std::size_t>(n_gaze), QueryOrigin::gaze);
  qs.origin.insert(qs.origin.end(), static_cast<std::size_t>(n_keep),
                   QueryOrigin::learnable);
  qs.mask = build_attention_mask(qs.origin);
  return qs;
}

}  // namespace gazedetr
