#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gazedetr/autograd.hpp"
#include "gazedetr/common.hpp"

namespace gazedetr {

// Named parameters with Adam state, insertion-ordered (checkpoint layout and
// tape binding both rely on that order).
template <typename S>
struct ParamStore {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  std::vector<std::string> names;
  std::vector<Mat> values;
  std::vector<Mat> adam_m, adam_v;
  std::map<std::string, int> index;

  int add(const std::string& name, Mat init) {
    require(index.find(name) == index.end(), "ParamStore: duplicate " + name);
    const int id = static_cast<int>(values.size());
    names.push_back(name);
    adam_m.push_back(Mat::Zero(init.rows(), init.cols()));
    adam_v.push_back(Mat::Zero(init.rows(), init.cols()));
    values.push_back(std::move(init));
    index[name] = id;
    return id;
  }

  int find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
  }

  Mat& at(const std::string& name) {
    const int id = find(name);
    require(id >= 0, "ParamStore: unknown parameter " + name);
    return values[static_cast<std::size_t>(id)];
  }

  std::size_t count() const { return values.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += static_cast<std::size_t>(v.size());
    return n;
  }
};

template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> xavier_init(int rows, int cols,
                                                             Rng& rng) {
  require(rows > 0 && cols > 0, "xavier_init: bad shape");
  const double a = std::sqrt(6.0 / (rows + cols));
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = static_cast<S>(rng.uniform(-a, a));
  return m;
}

template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> zeros_init(int rows, int cols) {
  return Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>::Zero(rows, cols);
}

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update; t is the 1-based step count, grads parallel to the store.
template <typename S>
void adam_step(ParamStore<S>& params,
               const std::vector<typename ParamStore<S>::Mat>& grads,
               const AdamConfig& cfg, long t) {
  require(grads.size() == params.count(), "adam_step: gradient count mismatch");
  require(t >= 1, "adam_step: step count starts at 1");
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S bc1 = static_cast<S>(1.0 - std::pow(cfg.beta1, double(t)));
  const S bc2 = static_cast<S>(1.0 - std::pow(cfg.beta2, double(t)));
  const S lr = static_cast<S>(cfg.lr), eps = static_cast<S>(cfg.eps);
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto& m = params.adam_m[i];
    auto& v = params.adam_v[i];
    const auto& g = grads[i];
    require(g.rows() == m.rows() && g.cols() == m.cols(),
            "adam_step: gradient shape mismatch for " + params.names[i]);
    m = b1 * m + (S(1) - b1) * g;
    v = (b2 * v.array() + (S(1) - b2) * g.array().square()).matrix();
    params.values[i].array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
}

// Tape-side view of the store: one input Var per parameter.
template <typename S>
struct BoundParams {
  std::vector<typename Tape<S>::Var> vars;

  typename Tape<S>::Var of(int id) const {
    require(id >= 0 && id < static_cast<int>(vars.size()),
            "BoundParams: bad parameter id");
    return vars[static_cast<std::size_t>(id)];
  }
};

template <typename S>
BoundParams<S> bind_params(Tape<S>& tape, const ParamStore<S>& params) {
  BoundParams<S> bound;
  bound.vars.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i)
    bound.vars.push_back(tape.input(params.values[i], /*needs_grad=*/true));
  return bound;
}

// Adds tape gradients into a store-parallel accumulator (e.g. across a batch).
template <typename S>
void accumulate_grads(const Tape<S>& tape, const BoundParams<S>& bound,
                      std::vector<typename ParamStore<S>::Mat>* accum) {
  require(accum->size() == bound.vars.size(),
          "accumulate_grads: accumulator size mismatch");
  for (std::size_t i = 0; i < bound.vars.size(); ++i)
    (*accum)[i] += tape.grad(bound.vars[i]);
}

template <typename S>
std::vector<typename ParamStore<S>::Mat> zero_grads(const ParamStore<S>& params) {
  using M = typename ParamStore<S>::Mat;
  std::vector<M> g;
  g.reserve(params.count());
  for (const auto& v : params.values) g.push_back(M::Zero(v.rows(), v.cols()));
  return g;
}

// ---- graph-building helpers ----

// y = x W + b, with W named `name.W` (in x out) and b named `name.b` (1 x out)
template <typename S>
struct Linear {
  int w_id = -1, b_id = -1;

  Linear() = default;
  Linear(ParamStore<S>& params, const std::string& name, int in, int out,
         Rng& rng) {
    w_id = params.add(name + ".W", xavier_init<S>(in, out, rng));
    b_id = params.add(name + ".b", zeros_init<S>(1, out));
  }

  typename Tape<S>::Var operator()(Tape<S>& t, const BoundParams<S>& p,
                                   typename Tape<S>::Var x) const {
    return t.add_rowvec(t.matmul(x, p.of(w_id)), p.of(b_id));
  }
};

// LayerNorm with learned gain/bias.
template <typename S>
struct LayerNorm {
  int g_id = -1, b_id = -1;

  LayerNorm() = default;
  LayerNorm(ParamStore<S>& params, const std::string& name, int dim) {
    using M = typename ParamStore<S>::Mat;
    g_id = params.add(name + ".g", M::Ones(1, dim));
    b_id = params.add(name + ".b", zeros_init<S>(1, dim));
  }

  typename Tape<S>::Var operator()(Tape<S>& t, const BoundParams<S>& p,
                                   typename Tape<S>::Var x) const {
    return t.add_rowvec(t.mul_rowvec(t.layernorm_rows(x), p.of(g_id)),
                        p.of(b_id));
  }
};

// Multi-head attention. Query/key get positional terms added by the caller;
// an optional additive mask (n_q x n_kv, 0 or large negative) gates scores.
template <typename S>
struct MultiHeadAttention {
  int n_heads = 0, d_model = 0;
  Linear<S> wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<S>& params, const std::string& name, int d,
                     int heads, Rng& rng)
      : n_heads(heads), d_model(d) {
    require(d % heads == 0, "MultiHeadAttention: d_model % n_heads != 0");
    wq = Linear<S>(params, name + ".q", d, d, rng);
    wk = Linear<S>(params, name + ".k", d, d, rng);
    wv = Linear<S>(params, name + ".v", d, d, rng);
    wo = Linear<S>(params, name + ".o", d, d, rng);
  }

  typename Tape<S>::Var operator()(
      Tape<S>& t, const BoundParams<S>& p, typename Tape<S>::Var q_in,
      typename Tape<S>::Var k_in, typename Tape<S>::Var v_in,
      typename Tape<S>::Var mask = {}) const {
    const auto q = wq(t, p, q_in);
    const auto k = wk(t, p, k_in);
    const auto v = wv(t, p, v_in);
    const int dh = d_model / n_heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(double(dh)));
    typename Tape<S>::Var out{};
    for (int h = 0; h < n_heads; ++h) {
      const auto qh = t.slice_cols(q, h * dh, dh);
      const auto kh = t.slice_cols(k, h * dh, dh);
      const auto vh = t.slice_cols(v, h * dh, dh);
      auto scores = t.affine(t.matmul(qh, t.transpose(kh)), scale, S(0));
      if (mask.id >= 0) scores = t.add(scores, mask);
      const auto attn = t.softmax_rows(scores);
      const auto head = t.matmul(attn, vh);
      out = h == 0 ? head : t.concat_cols(out, head);
    }
    return wo(t, p, out);
  }
};

// sin/cos features of one scalar column, DETR-style, dim values per scalar.
// temperature kept small because desk-scale grids are small.
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> sincos_features(
    const Eigen::Matrix<S, Eigen::Dynamic, 1>& x, int dim,
    double temperature = 20.0) {
  require(dim > 0 && dim % 2 == 0, "sincos_features: dim must be even");
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> out(x.rows(), dim);
  const double two_pi = 2.0 * 3.141592653589793238462643383279502884;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (int i = 0; i < dim / 2; ++i) {
      const double freq =
          std::pow(temperature, 2.0 * i / static_cast<double>(dim));
      const double v = double(x(r, 0)) * two_pi / freq;
      out(r, 2 * i) = static_cast<S>(std::sin(v));
      out(r, 2 * i + 1) = static_cast<S>(std::cos(v));
    }
  return out;
}

}  // namespace gazedetr
