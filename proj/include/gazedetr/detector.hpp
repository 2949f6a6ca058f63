#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gazedetr/autograd.hpp"
#include "gazedetr/common.hpp"
#include "gazedetr/geometry.hpp"
#include "gazedetr/image.hpp"
#include "gazedetr/metrics.hpp"
#include "gazedetr/nn.hpp"

namespace gazedetr {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_encoder_layers = 2;
  int n_decoder_layers = 2;
  int n_learnable_queries = 50;
  int query_budget = 64;  // Q
  int feature_stride = 8;
  int n_classes = 3;  // candida, gaze_only, no_object
};

inline void validate(const ModelConfig& c) {
  require(c.d_model > 0 && c.n_heads > 0 && c.d_model % c.n_heads == 0,
          "ModelConfig: d_model must be a positive multiple of n_heads");
  require(c.d_model % 8 == 0, "ModelConfig: d_model must be divisible by 8");
  require(c.n_encoder_layers >= 1 && c.n_decoder_layers >= 1,
          "ModelConfig: need at least one layer each");
  require(c.n_learnable_queries >= 1, "ModelConfig: n_learnable_queries >= 1");
  require(c.query_budget >= 1, "ModelConfig: query_budget >= 1");
  require(c.feature_stride == 2 || c.feature_stride == 4 || c.feature_stride == 8,
          "ModelConfig: feature_stride must be 2, 4 or 8");
  require(c.n_classes == 3, "ModelConfig: the class set is fixed at 3");
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"n_encoder_layers", c.n_encoder_layers},
          {"n_decoder_layers", c.n_decoder_layers},
          {"n_learnable_queries", c.n_learnable_queries},
          {"query_budget", c.query_budget},
          {"feature_stride", c.feature_stride},
          {"n_classes", c.n_classes}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_encoder_layers = j.at("n_encoder_layers").get<int>();
  c.n_decoder_layers = j.at("n_decoder_layers").get<int>();
  c.n_learnable_queries = j.at("n_learnable_queries").get<int>();
  c.query_budget = j.at("query_budget").get<int>();
  c.feature_stride = j.at("feature_stride").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  validate(c);
  return c;
}

enum class QueryOrigin { learnable, gaze };

// One decoder input set: exactly Q anchors/contents/flags plus the Q x Q
// self-attention mask (true = blocked). Contents live on the caller's tape.
template <typename S>
struct QuerySet {
  std::vector<Box> anchors;
  typename Tape<S>::Var contents;
  std::vector<QueryOrigin> origin;
  std::vector<char> mask;  // row-major Q*Q; row = attending query

  int size() const { return static_cast<int>(anchors.size()); }
};

template <typename S>
struct DecodeResult {
  std::vector<typename Tape<S>::Var> logits;  // per layer, Q x 3
  std::vector<typename Tape<S>::Var> boxes;   // per layer, Q x 4 squashed
  std::vector<std::vector<Box>> box_values;   // per layer
};

namespace detail {

inline double logit_clamped(double v) {
  v = std::clamp(v, 1e-6, 1.0 - 1e-6);
  return std::log(v / (1.0 - v));
}

}  // namespace detail

template <typename S>
class Detector {
 public:
  using Mat = typename Tape<S>::Mat;
  using Var = typename Tape<S>::Var;

  ModelConfig cfg;
  ParamStore<S> params;
  long adam_step = 0;  // persisted with the optimizer state

  Detector(const ModelConfig& config, std::uint64_t init_seed) : cfg(config) {
    validate(cfg);
    Rng rng = derive_rng(init_seed, 0xdec0de);
    const int d = cfg.d_model;
    const int d_ffn = 4 * d;

    int n_convs = 0;
    for (int s = cfg.feature_stride; s > 1; s /= 2) ++n_convs;
    int ch_in = 1;
    for (int i = 0; i < n_convs; ++i) {
      const int ch_out = d >> (n_convs - 1 - i);
      conv_.push_back(Linear<S>(params, "backbone.conv" + std::to_string(i),
                                9 * ch_in, ch_out, rng));
      conv_channels_.push_back({ch_in, ch_out});
      ch_in = ch_out;
    }

    for (int l = 0; l < cfg.n_encoder_layers; ++l) {
      const std::string p = "enc" + std::to_string(l);
      enc_.push_back({MultiHeadAttention<S>(params, p + ".attn", d, cfg.n_heads, rng),
                      LayerNorm<S>(params, p + ".ln1", d),
                      Linear<S>(params, p + ".ffn.l1", d, d_ffn, rng),
                      Linear<S>(params, p + ".ffn.l2", d_ffn, d, rng),
                      LayerNorm<S>(params, p + ".ln2", d)});
    }
    for (int l = 0; l < cfg.n_decoder_layers; ++l) {
      const std::string p = "dec" + std::to_string(l);
      dec_.push_back(
          {MultiHeadAttention<S>(params, p + ".self", d, cfg.n_heads, rng),
           LayerNorm<S>(params, p + ".ln1", d),
           MultiHeadAttention<S>(params, p + ".cross", d, cfg.n_heads, rng),
           LayerNorm<S>(params, p + ".ln2", d),
           Linear<S>(params, p + ".ffn.l1", d, d_ffn, rng),
           Linear<S>(params, p + ".ffn.l2", d_ffn, d, rng),
           LayerNorm<S>(params, p + ".ln3", d)});
    }

    anchor_pe_proj_ = Linear<S>(params, "anchor_pe.proj", 2 * d, d, rng);
    // heads shared across decoder layers AND with encoder-side proposals
    class_head_ = Linear<S>(params, "class_head", d, cfg.n_classes, rng);
    box_head_l1_ = Linear<S>(params, "box_head.l1", d, d, rng);
    box_head_l2_ = Linear<S>(params, "box_head.l2", d, d, rng);
    box_head_l3_ = Linear<S>(params, "box_head.l3", d, 4, rng);
    // zero the last delta layer: initial predictions sit on their anchors
    params.values[static_cast<std::size_t>(box_head_l3_.w_id)].setZero();
    params.add("label_embed", xavier_init<S>(cfg.n_classes, d, rng));
    label_embed_id_ = params.find("label_embed");
  }

  // ---- backbone + transformer encoder ----

  struct Memory {
    Var tokens;  // post-encoder memory, (gh*gw) x d
    Mat grid;    // backbone output values before positional encoding
    Mat pe;      // token positional encodings (constant)
    int gh = 0, gw = 0;
  };

  Memory backbone_encode(Tape<S>& t, const BoundParams<S>& p, const Image8& img) {
    require(img.h > 0 && img.w > 0, "backbone_encode: empty image");
    require(img.h % cfg.feature_stride == 0 && img.w % cfg.feature_stride == 0,
            "backbone_encode: image size must be divisible by feature_stride");
    Mat x(static_cast<Eigen::Index>(img.h) * img.w, 1);
    for (int r = 0; r < img.h; ++r)
      for (int c = 0; c < img.w; ++c)
        x(static_cast<Eigen::Index>(r) * img.w + c, 0) =
            static_cast<S>(img.at(r, c) / 255.0);

    Var h = t.constant(std::move(x));
    int cur_h = img.h, cur_w = img.w;
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      const Im2colPlan& plan =
          plan_for(cur_h, cur_w, conv_channels_[i].first);
      h = t.relu(conv_[i](t, p, t.im2col(h, plan)));
      cur_h = plan.out_h;
      cur_w = plan.out_w;
    }
    Memory mem;
    mem.gh = cur_h;
    mem.gw = cur_w;
    mem.grid = t.value(h);
    mem.pe = token_pe(cur_h, cur_w);

    const Var pe = t.constant(mem.pe);
    for (const auto& layer : enc_) {
      const Var qk = t.add(h, pe);
      const Var att = layer.attn(t, p, qk, qk, h);
      h = layer.ln1(t, p, t.add(h, att));
      const Var ff = layer.ffn_l2(t, p, t.relu(layer.ffn_l1(t, p, h)));
      h = layer.ln2(t, p, t.add(h, ff));
    }
    mem.tokens = h;
    return mem;
  }

  // ---- encoder-side proposals ----

  struct Proposals {
    std::vector<Box> anchors;  // detached
    Var contents;              // n_learnable x d, gathered memory rows
    std::vector<S> scores;     // nonincreasing
    std::vector<int> token_index;
  };

  Proposals init_learnable_queries(Tape<S>& t, const BoundParams<S>& p,
                                   const Memory& mem) {
    const int n_tokens = mem.gh * mem.gw;
    require(n_tokens >= cfg.n_learnable_queries,
            "init_learnable_queries: fewer memory tokens than "
            "n_learnable_queries");
    // score every token with the shared class head; rank by max class logit
    const Var logits = class_head_(t, p, mem.tokens);
    const Mat logit_vals = t.value(logits);
    std::vector<std::pair<S, int>> ranked;
    ranked.reserve(static_cast<std::size_t>(n_tokens));
    for (int i = 0; i < n_tokens; ++i)
      ranked.push_back({logit_vals.row(i).maxCoeff(), i});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) {
                       return a.first != b.first ? a.first > b.first
                                                 : a.second < b.second;
                     });
    ranked.resize(static_cast<std::size_t>(cfg.n_learnable_queries));

    Proposals out;
    out.token_index.reserve(ranked.size());
    out.scores.reserve(ranked.size());
    for (const auto& [score, idx] : ranked) {
      out.scores.push_back(score);
      out.token_index.push_back(idx);
    }
    out.contents = t.gather_rows(mem.tokens, out.token_index);

    // anchor = sigmoid(logit(base cell box) + shared box head delta)
    const Var delta = box_head(t, p, out.contents);
    const Mat delta_vals = t.value(delta);
    for (std::size_t k = 0; k < out.token_index.size(); ++k) {
      const int idx = out.token_index[k];
      const int gy = idx / mem.gw, gx = idx % mem.gw;
      const double base_cx = (gx + 0.5) / mem.gw;
      const double base_cy = (gy + 0.5) / mem.gh;
      auto squash = [&](double base, int col) {
        const double u = detail::logit_clamped(base) +
                         double(delta_vals(static_cast<Eigen::Index>(k), col));
        return 1.0 / (1.0 + std::exp(-std::clamp(u, -16.0, 16.0)));
      };
      out.anchors.push_back(make_box(squash(base_cx, 0), squash(base_cy, 1),
                                     squash(0.15, 2), squash(0.15, 3)));
    }
    return out;
  }

  // ---- decoder ----

  DecodeResult<S> decode(Tape<S>& t, const BoundParams<S>& p,
                         const QuerySet<S>& queries, const Memory& mem) {
    const int q = queries.size();
    require(q >= 1, "decode: empty query set");
    require(static_cast<int>(queries.origin.size()) == q &&
                t.value(queries.contents).rows() == q,
            "decode: query fields disagree on Q");
    require(queries.mask.size() == static_cast<std::size_t>(q) * q,
            "decode: attention mask must be Q x Q");
    require(t.value(queries.contents).cols() == cfg.d_model,
            "decode: content width must be d_model");

    Mat mask_add = Mat::Zero(q, q);
    for (int r = 0; r < q; ++r)
      for (int c = 0; c < q; ++c)
        if (queries.mask[static_cast<std::size_t>(r) * q + c] && r != c)
          mask_add(r, c) = S(-1e9);
    const Var mask_var = t.constant(std::move(mask_add));
    const Var mem_pe = t.constant(mem.pe);
    const Var mem_k = t.add(mem.tokens, mem_pe);

    DecodeResult<S> out;
    std::vector<Box> anchors = queries.anchors;
    Var content = queries.contents;
    for (const auto& layer : dec_) {
      const Var qpe = anchor_pe(t, p, anchors);
      const Var qk = t.add(content, qpe);
      const Var self_att = layer.self(t, p, qk, qk, content, mask_var);
      Var x = layer.ln1(t, p, t.add(content, self_att));
      const Var cross_att =
          layer.cross(t, p, t.add(x, qpe), mem_k, mem.tokens);
      x = layer.ln2(t, p, t.add(x, cross_att));
      const Var ff = layer.ffn_l2(t, p, t.relu(layer.ffn_l1(t, p, x)));
      x = layer.ln3(t, p, t.add(x, ff));

      const Var logits = class_head_(t, p, x);
      // additive refinement in unsquashed space, clamped to keep sigmoids
      // strictly inside (0,1)
      Mat anchor_logits(q, 4);
      for (int i = 0; i < q; ++i) {
        anchor_logits(i, 0) = static_cast<S>(detail::logit_clamped(anchors[i].cx));
        anchor_logits(i, 1) = static_cast<S>(detail::logit_clamped(anchors[i].cy));
        anchor_logits(i, 2) = static_cast<S>(detail::logit_clamped(anchors[i].w));
        anchor_logits(i, 3) = static_cast<S>(detail::logit_clamped(anchors[i].h));
      }
      const Var unsquashed = t.add(t.constant(std::move(anchor_logits)),
                                   box_head(t, p, x));
      const Var clamped =
          t.cmin(t.cmax(unsquashed, t.constant(Mat::Constant(q, 4, S(-16)))),
                 t.constant(Mat::Constant(q, 4, S(16))));
      const Var boxes = t.sigmoid(clamped);

      out.logits.push_back(logits);
      out.boxes.push_back(boxes);
      const Mat bv = t.value(boxes);
      std::vector<Box> layer_boxes;
      layer_boxes.reserve(static_cast<std::size_t>(q));
      for (int i = 0; i < q; ++i)
        layer_boxes.push_back(make_box(bv(i, 0), bv(i, 1), bv(i, 2), bv(i, 3)));
      out.box_values.push_back(layer_boxes);

      anchors = layer_boxes;  // value copy: the inter-layer detach
      content = x;
    }
    return out;
  }

  // Plain inference/warm-up query set: the top-Q proposals, nothing blocked.
  QuerySet<S> plain_queries(Tape<S>& t, const Proposals& props) const {
    const int q = cfg.query_budget;
    require(static_cast<int>(props.anchors.size()) >= q,
            "plain_queries: need at least Q learnable proposals; raise "
            "n_learnable_queries to at least query_budget");
    QuerySet<S> qs;
    qs.anchors.assign(props.anchors.begin(), props.anchors.begin() + q);
    qs.contents = q == static_cast<int>(props.anchors.size())
                      ? props.contents
                      : t.slice_rows(props.contents, 0, q);
    qs.origin.assign(static_cast<std::size_t>(q), QueryOrigin::learnable);
    qs.mask.assign(static_cast<std::size_t>(q) * q, 0);
    return qs;
  }

  // Inference: learnable queries only, no gaze inputs by construction.
  DetectionSet predict(const Image8& img, double conf_threshold,
                       const std::string& image_id = "") {
    Tape<S> t;
    const BoundParams<S> bound = bind_params(t, params);
    const Memory mem = backbone_encode(t, bound, img);
    const Proposals props = init_learnable_queries(t, bound, mem);
    const QuerySet<S> qs = plain_queries(t, props);
    const DecodeResult<S> dec = decode(t, bound, qs, mem);

    Tape<S> probs_t;  // throwaway tape for the value-side softmax
    const Mat probs = probs_t.value(
        probs_t.softmax_rows(probs_t.constant(t.value(dec.logits.back()))));
    const auto& boxes = dec.box_values.back();
    std::vector<ScoredBox> dets;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const double score = double(probs(static_cast<Eigen::Index>(i), kClassCandida));
      if (score >= conf_threshold) dets.push_back({boxes[i], score});
    }
    return make_detection_set(image_id, std::move(dets));
  }

  Var label_embedding(const BoundParams<S>& p) const {
    return p.of(label_embed_id_);
  }

  // three-layer box delta head, shared by proposals and all decoder layers
  Var box_head(Tape<S>& t, const BoundParams<S>& p, Var x) const {
    return box_head_l3_(t, p, t.relu(box_head_l2_(t, p, t.relu(box_head_l1_(t, p, x)))));
  }

  Var class_head(Tape<S>& t, const BoundParams<S>& p, Var x) const {
    return class_head_(t, p, x);
  }

  // sinusoidal anchor encoding (4 coords, d/2 each) projected to d_model
  Var anchor_pe(Tape<S>& t, const BoundParams<S>& p,
                const std::vector<Box>& anchors) const {
    const int n = static_cast<int>(anchors.size());
    const int half = cfg.d_model / 2;
    Mat feats(n, 4 * half);
    Eigen::Matrix<S, Eigen::Dynamic, 1> col(n);
    for (int c = 0; c < 4; ++c) {
      for (int i = 0; i < n; ++i) {
        const Box& b = anchors[static_cast<std::size_t>(i)];
        col(i) = static_cast<S>(c == 0 ? b.cx : c == 1 ? b.cy : c == 2 ? b.w : b.h);
      }
      feats.middleCols(static_cast<Eigen::Index>(c) * half, half) =
          sincos_features<S>(col, half);
    }
    return anchor_pe_proj_(t, p, t.constant(std::move(feats)));
  }

 private:
  struct EncLayer {
    MultiHeadAttention<S> attn;
    LayerNorm<S> ln1;
    Linear<S> ffn_l1, ffn_l2;
    LayerNorm<S> ln2;
  };
  struct DecLayer {
    MultiHeadAttention<S> self;
    LayerNorm<S> ln1;
    MultiHeadAttention<S> cross;
    LayerNorm<S> ln2;
    Linear<S> ffn_l1, ffn_l2;
    LayerNorm<S> ln3;
  };

  const Im2colPlan& plan_for(int h, int w, int ch) {
    const auto key = std::array<int, 3>{h, w, ch};
    auto it = plans_.find(key);
    if (it == plans_.end())
      it = plans_.emplace(key, make_im2col_plan(h, w, ch, 3, 2, 1)).first;
    return it->second;
  }

  // 2-D sinusoidal token encoding: d/2 dims for y, d/2 for x
  Mat token_pe(int gh, int gw) {
    const auto key = std::pair<int, int>{gh, gw};
    auto it = token_pe_.find(key);
    if (it != token_pe_.end()) return it->second;
    const int half = cfg.d_model / 2;
    Eigen::Matrix<S, Eigen::Dynamic, 1> ys(gh * gw), xs(gh * gw);
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        ys(gy * gw + gx) = static_cast<S>((gy + 0.5) / gh);
        xs(gy * gw + gx) = static_cast<S>((gx + 0.5) / gw);
      }
    Mat pe(gh * gw, cfg.d_model);
    pe.leftCols(half) = sincos_features<S>(ys, half);
    pe.rightCols(half) = sincos_features<S>(xs, half);
    token_pe_.emplace(key, pe);
    return pe;
  }

  std::vector<Linear<S>> conv_;
  std::vector<std::pair<int, int>> conv_channels_;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  Linear<S> anchor_pe_proj_, class_head_;
  Linear<S> box_head_l1_, box_head_l2_, box_head_l3_;
  int label_embed_id_ = -1;
  std::map<std::array<int, 3>, Im2colPlan> plans_;
  std::map<std::pair<int, int>, Mat> token_pe_;
};

// ---- checkpoints: params.bin (named float32 arrays) + meta.json ----

namespace detail {
constexpr char kParamMagic[9] = "GZDPARAM";
}

template <typename S>
void save_params_bin(const std::string& path, const ParamStore<S>& store) {
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  auto describe = [&](const std::string& name, const auto& m) {
    index.push_back({{"name", name},
                     {"rows", m.rows()},
                     {"cols", m.cols()},
                     {"offset", offset}});
    offset += static_cast<std::size_t>(m.size());
  };
  for (std::size_t i = 0; i < store.count(); ++i)
    describe(store.names[i], store.values[i]);
  for (std::size_t i = 0; i < store.count(); ++i)
    describe("opt.m." + store.names[i], store.adam_m[i]);
  for (std::size_t i = 0; i < store.count(); ++i)
    describe("opt.v." + store.names[i], store.adam_v[i]);

  const std::string header = nlohmann::json{{"arrays", index}}.dump();
  std::ofstream out(path, std::ios::binary);
  check_state(out.good(), "cannot open for write: " + path);
  out.write(detail::kParamMagic, 8);
  const std::uint64_t json_len = header.size();
  out.write(reinterpret_cast<const char*>(&json_len), 8);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  auto write_mat = [&](const auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const float v = static_cast<float>(m(r, c));
        out.write(reinterpret_cast<const char*>(&v), 4);
      }
  };
  for (std::size_t i = 0; i < store.count(); ++i) write_mat(store.values[i]);
  for (std::size_t i = 0; i < store.count(); ++i) write_mat(store.adam_m[i]);
  for (std::size_t i = 0; i < store.count(); ++i) write_mat(store.adam_v[i]);
  check_state(out.good(), "write failed: " + path);
}

template <typename S>
void load_params_bin(const std::string& path, ParamStore<S>* store) {
  std::ifstream in(path, std::ios::binary);
  check_state(in.good(), "missing checkpoint file: " + path);
  char magic[8];
  in.read(magic, 8);
  check_state(in.good() && std::memcmp(magic, detail::kParamMagic, 8) == 0,
              "not a parameter file: " + path);
  std::uint64_t json_len = 0;
  in.read(reinterpret_cast<char*>(&json_len), 8);
  std::string header(json_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(json_len));
  check_state(in.good(), "truncated parameter file: " + path);
  const nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
  check_state(!j.is_discarded() && j.contains("arrays"),
              "corrupt parameter index: " + path);

  const std::streampos payload_start = in.tellg();
  auto load_into = [&](const nlohmann::json& entry, auto& m) {
    check_state(entry.at("rows").get<Eigen::Index>() == m.rows() &&
                    entry.at("cols").get<Eigen::Index>() == m.cols(),
                "checkpoint shape mismatch for " +
                    entry.at("name").get<std::string>() + " in " + path);
    in.seekg(payload_start +
             static_cast<std::streamoff>(entry.at("offset").get<std::size_t>() * 4));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        float v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        m(r, c) = static_cast<S>(v);
      }
    check_state(in.good(), "truncated parameter payload: " + path);
  };
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& entry : j["arrays"])
    by_name[entry.at("name").get<std::string>()] = &entry;
  auto find = [&](const std::string& name) -> const nlohmann::json& {
    auto it = by_name.find(name);
    check_state(it != by_name.end(),
                "checkpoint missing array " + name + ": " + path);
    return *it->second;
  };
  for (std::size_t i = 0; i < store->count(); ++i) {
    load_into(find(store->names[i]), store->values[i]);
    load_into(find("opt.m." + store->names[i]), store->adam_m[i]);
    load_into(find("opt.v." + store->names[i]), store->adam_v[i]);
  }
}

struct CheckpointMeta {
  ModelConfig config;
  int epoch = 0;
  std::string phase = "warmup";
  std::string rng_state;
  long adam_step = 0;
  std::string dataset;  // source dataset dir, so eval can find the splits
};

template <typename S>
void save_checkpoint(const std::string& dir, const Detector<S>& det,
                     const CheckpointMeta& meta) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_params_bin((fs::path(dir) / "params.bin").string(), det.params);
  nlohmann::json j{{"config", to_json(meta.config)},
                   {"epoch", meta.epoch},
                   {"phase", meta.phase},
                   {"rng_state", meta.rng_state},
                   {"adam_step", meta.adam_step},
                   {"dataset", meta.dataset}};
  std::ofstream out(fs::path(dir) / "meta.json");
  check_state(out.good(), "cannot open for write: " + dir + "/meta.json");
  out << j.dump(2) << "\n";
  check_state(out.good(), "write failed: " + dir + "/meta.json");
}

template <typename S>
Detector<S> load_checkpoint(const std::string& dir, CheckpointMeta* meta_out) {
  namespace fs = std::filesystem;
  const std::string meta_path = (fs::path(dir) / "meta.json").string();
  std::ifstream in(meta_path);
  check_state(in.good(), "missing checkpoint metadata: " + meta_path);
  const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  check_state(!j.is_discarded(), "corrupt checkpoint metadata: " + meta_path);
  CheckpointMeta meta;
  meta.config = model_config_from_json(j.at("config"));
  meta.epoch = j.at("epoch").get<int>();
  meta.phase = j.at("phase").get<std::string>();
  meta.rng_state = j.at("rng_state").get<std::string>();
  meta.adam_step = j.at("adam_step").get<long>();
  meta.dataset = j.value("dataset", std::string());

  Detector<S> det(meta.config, /*init_seed=*/0);
  load_params_bin((fs::path(dir) / "params.bin").string(), &det.params);
  det.adam_step = meta.adam_step;
  if (meta_out) *meta_out = meta;
  return det;
}

}  // namespace gazedetr
