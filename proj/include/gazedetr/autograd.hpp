#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gazedetr/common.hpp"

namespace gazedetr {

// Precomputed patch-gather map for stride-s same-ish padding convolutions on
// a (h*w) x channels feature matrix. src_rows[p][r] is the input row feeding
// patch slot p of output row r, or -1 for padding.
struct Im2colPlan {
  int in_h = 0, in_w = 0, in_ch = 0;
  int k = 0, stride = 0, pad = 0;
  int out_h = 0, out_w = 0;
  std::vector<std::vector<int>> src_rows;
};

inline Im2colPlan make_im2col_plan(int in_h, int in_w, int in_ch, int k,
                                   int stride, int pad) {
  require(in_h > 0 && in_w > 0 && in_ch > 0 && k > 0 && stride > 0 && pad >= 0,
          "make_im2col_plan: bad dimensions");
  Im2colPlan plan{in_h, in_w, in_ch, k, stride, pad};
  plan.out_h = (in_h + 2 * pad - k) / stride + 1;
  plan.out_w = (in_w + 2 * pad - k) / stride + 1;
  require(plan.out_h > 0 && plan.out_w > 0, "make_im2col_plan: empty output");
  plan.src_rows.assign(static_cast<std::size_t>(k) * k, {});
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx) {
      auto& rows = plan.src_rows[static_cast<std::size_t>(ky) * k + kx];
      rows.resize(static_cast<std::size_t>(plan.out_h) * plan.out_w);
      for (int oy = 0; oy < plan.out_h; ++oy)
        for (int ox = 0; ox < plan.out_w; ++ox) {
          const int iy = oy * stride + ky - pad;
          const int ix = ox * stride + kx - pad;
          const bool in = iy >= 0 && iy < in_h && ix >= 0 && ix < in_w;
          rows[static_cast<std::size_t>(oy) * plan.out_w + ox] =
              in ? iy * in_w + ix : -1;
        }
    }
  return plan;
}

// Reverse-mode tape. Nodes are dense matrices; backward closures accumulate
// into parent gradients in reverse creation order. The tape owns all storage;
// Var handles are indices into it.
template <typename S>
class Tape {
 public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  struct Var {
    int id = -1;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(Mat v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, nullptr);
  }
  Var constant(Mat v) { return input(std::move(v), false); }
  Var scalar(S v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  const Mat& value(Var x) const { return node(x).value; }
  const Mat& grad(Var x) const { return node(x).grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  void backward(Var out) {
    auto& n = node(out);
    require(n.value.rows() == 1 && n.value.cols() == 1,
            "backward: output must be scalar");
    for (auto& nd : nodes_)
      if (nd.needs_grad) nd.grad.setZero();
    if (!n.needs_grad) return;
    n.grad(0, 0) = S(1);
    for (int i = out.id; i >= 0; --i)
      if (nodes_[static_cast<std::size_t>(i)].back)
        nodes_[static_cast<std::size_t>(i)].back();
  }

  // ---- arithmetic ----

  Var matmul(Var a, Var b) {
    require(value(a).cols() == value(b).rows(), "matmul: inner dimensions");
    Mat c = value(a) * value(b);
    return push(std::move(c), wants(a) || wants(b), [this, a, b](int out) {
      if (wants(a)) gref(a).noalias() += node_grad(out) * value(b).transpose();
      if (wants(b)) gref(b).noalias() += value(a).transpose() * node_grad(out);
    });
  }

  Var add(Var a, Var b) {
    same_shape(a, b, "add");
    Mat c = value(a) + value(b);
    return push(std::move(c), wants(a) || wants(b), [this, a, b](int out) {
      if (wants(a)) gref(a) += node_grad(out);
      if (wants(b)) gref(b) += node_grad(out);
    });
  }

  Var sub(Var a, Var b) {
    same_shape(a, b, "sub");
    Mat c = value(a) - value(b);
    return push(std::move(c), wants(a) || wants(b), [this, a, b](int out) {
      if (wants(a)) gref(a) += node_grad(out);
      if (wants(b)) gref(b) -= node_grad(out);
    });
  }

  Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    Mat c = value(a).cwiseProduct(value(b));
    return push(std::move(c), wants(a) || wants(b), [this, a, b](int out) {
      if (wants(a)) gref(a) += node_grad(out).cwiseProduct(value(b));
      if (wants(b)) gref(b) += node_grad(out).cwiseProduct(value(a));
    });
  }

  Var div(Var a, Var b) {
    same_shape(a, b, "div");
    Mat c = value(a).cwiseQuotient(value(b));
    return push(std::move(c), wants(a) || wants(b), [this, a, b](int out) {
      if (wants(a)) gref(a) += node_grad(out).cwiseQuotient(value(b));
      if (wants(b))
        gref(b) -= node_grad(out)
                       .cwiseProduct(node_value(out))
                       .cwiseQuotient(value(b));
    });
  }

  // C = alpha * A + beta
  Var affine(Var a, S alpha, S beta) {
    Mat c = (value(a).array() * alpha + beta).matrix();
    return push(std::move(c), wants(a), [this, a, alpha](int out) {
      if (wants(a)) gref(a) += alpha * node_grad(out);
    });
  }

  // A (m x n) + row vector v (1 x n), broadcast down rows
  Var add_rowvec(Var a, Var v) {
    require(value(v).rows() == 1 && value(v).cols() == value(a).cols(),
            "add_rowvec: v must be 1 x cols(a)");
    Mat c = value(a).rowwise() + value(v).row(0);
    return push(std::move(c), wants(a) || wants(v), [this, a, v](int out) {
      if (wants(a)) gref(a) += node_grad(out);
      if (wants(v)) gref(v).row(0) += node_grad(out).colwise().sum();
    });
  }

  Var mul_rowvec(Var a, Var v) {
    require(value(v).rows() == 1 && value(v).cols() == value(a).cols(),
            "mul_rowvec: v must be 1 x cols(a)");
    Mat c = value(a).array().rowwise() * value(v).row(0).array();
    return push(std::move(c), wants(a) || wants(v), [this, a, v](int out) {
      if (wants(a))
        gref(a).array() +=
            node_grad(out).array().rowwise() * value(v).row(0).array();
      if (wants(v))
        gref(v).row(0) +=
            node_grad(out).cwiseProduct(value(a)).colwise().sum();
    });
  }

  // ---- nonlinearities ----

  Var relu(Var a) {
    Mat c = value(a).cwiseMax(S(0));
    return push(std::move(c), wants(a), [this, a](int out) {
      if (!wants(a)) return;
      gref(a).array() +=
          node_grad(out).array() * (value(a).array() > S(0)).template cast<S>();
    });
  }

  Var sigmoid(Var a) {
    Mat c = (S(1) / (S(1) + (-value(a).array()).exp())).matrix();
    return push(std::move(c), wants(a), [this, a](int out) {
      if (!wants(a)) return;
      const auto& s = node_value(out).array();
      gref(a).array() += node_grad(out).array() * s * (S(1) - s);
    });
  }

  Var log(Var a) {
    require((value(a).array() > S(0)).all(), "log: nonpositive input");
    Mat c = value(a).array().log().matrix();
    return push(std::move(c), wants(a), [this, a](int out) {
      if (wants(a)) gref(a) += node_grad(out).cwiseQuotient(value(a));
    });
  }

  Var exp(Var a) {
    Mat c = value(a).array().exp().matrix();
    return push(std::move(c), wants(a), [this, a](int out) {
      if (wants(a)) gref(a) += node_grad(out).cwiseProduct(node_value(out));
    });
  }

  Var abs(Var a) {
    Mat c = value(a).cwiseAbs();
    return push(std::move(c), wants(a), [this, a](int out) {
      if (!wants(a)) return;
      gref(a).array() += node_grad(out).array() * value(a).array().sign();
    });
  }

  // elementwise max; at ties the gradient goes to a
  Var cmax(Var a, Var b) {
    same_shape(a, b, "cmax");
    Mat c = value(a).cwiseMax(value(b));
    return push(std::move(c), wants(a) || wants(b), [this, a, b](int out) {
      const Mat pick_a =
          (value(a).array() >= value(b).array()).template cast<S>().matrix();
      if (wants(a)) gref(a) += node_grad(out).cwiseProduct(pick_a);
      if (wants(b))
        gref(b).array() +=
            node_grad(out).array() * (S(1) - pick_a.array());
    });
  }

  Var cmin(Var a, Var b) {
    same_shape(a, b, "cmin");
    Mat c = value(a).cwiseMin(value(b));
    return push(std::move(c), wants(a) || wants(b), [this, a, b](int out) {
      const Mat pick_a =
          (value(a).array() <= value(b).array()).template cast<S>().matrix();
      if (wants(a)) gref(a) += node_grad(out).cwiseProduct(pick_a);
      if (wants(b))
        gref(b).array() +=
            node_grad(out).array() * (S(1) - pick_a.array());
    });
  }

  // ---- shape ----

  Var transpose(Var a) {
    Mat c = value(a).transpose();
    return push(std::move(c), wants(a), [this, a](int out) {
      if (wants(a)) gref(a) += node_grad(out).transpose();
    });
  }

  Var concat_rows(Var a, Var b) {
    require(value(a).cols() == value(b).cols(), "concat_rows: column mismatch");
    Mat c(value(a).rows() + value(b).rows(), value(a).cols());
    c.topRows(value(a).rows()) = value(a);
    c.bottomRows(value(b).rows()) = value(b);
    return push(std::move(c), wants(a) || wants(b), [this, a, b](int out) {
      const auto ra = value(a).rows();
      const auto rb = value(b).rows();
      if (wants(a)) gref(a) += node_grad(out).topRows(ra);
      if (wants(b)) gref(b) += node_grad(out).bottomRows(rb);
    });
  }

  Var concat_cols(Var a, Var b) {
    require(value(a).rows() == value(b).rows(), "concat_cols: row mismatch");
    Mat c(value(a).rows(), value(a).cols() + value(b).cols());
    c.leftCols(value(a).cols()) = value(a);
    c.rightCols(value(b).cols()) = value(b);
    return push(std::move(c), wants(a) || wants(b), [this, a, b](int out) {
      const auto ca = value(a).cols();
      const auto cb = value(b).cols();
      if (wants(a)) gref(a) += node_grad(out).leftCols(ca);
      if (wants(b)) gref(b) += node_grad(out).rightCols(cb);
    });
  }

  Var slice_rows(Var a, int r0, int n) {
    require(r0 >= 0 && n >= 0 && r0 + n <= value(a).rows(),
            "slice_rows: out of range");
    Mat c = value(a).middleRows(r0, n);
    return push(std::move(c), wants(a), [this, a, r0, n](int out) {
      if (wants(a)) gref(a).middleRows(r0, n) += node_grad(out);
    });
  }

  Var slice_cols(Var a, int c0, int n) {
    require(c0 >= 0 && n >= 0 && c0 + n <= value(a).cols(),
            "slice_cols: out of range");
    Mat c = value(a).middleCols(c0, n);
    return push(std::move(c), wants(a), [this, a, c0, n](int out) {
      if (wants(a)) gref(a).middleCols(c0, n) += node_grad(out);
    });
  }

  Var gather_rows(Var a, std::vector<int> idx) {
    for (int i : idx)
      require(i >= 0 && i < value(a).rows(), "gather_rows: index out of range");
    Mat c(static_cast<Eigen::Index>(idx.size()), value(a).cols());
    for (std::size_t k = 0; k < idx.size(); ++k)
      c.row(static_cast<Eigen::Index>(k)) = value(a).row(idx[k]);
    return push(std::move(c), wants(a),
                [this, a, idx = std::move(idx)](int out) {
                  if (!wants(a)) return;
                  for (std::size_t k = 0; k < idx.size(); ++k)
                    gref(a).row(idx[k]) +=
                        node_grad(out).row(static_cast<Eigen::Index>(k));
                });
  }

  // ---- reductions ----

  Var sum(Var a) {
    Mat c(1, 1);
    c(0, 0) = value(a).sum();
    return push(std::move(c), wants(a), [this, a](int out) {
      if (wants(a)) gref(a).array() += node_grad(out)(0, 0);
    });
  }

  Var mean(Var a) {
    require(value(a).size() > 0, "mean: empty matrix");
    Mat c(1, 1);
    c(0, 0) = value(a).sum() / static_cast<S>(value(a).size());
    return push(std::move(c), wants(a), [this, a](int out) {
      if (wants(a))
        gref(a).array() +=
            node_grad(out)(0, 0) / static_cast<S>(value(a).size());
    });
  }

  // ---- structured ops ----

  Var softmax_rows(Var a) {
    Mat c = value(a);
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      const S mx = c.row(r).maxCoeff();
      c.row(r) = (c.row(r).array() - mx).exp();
      c.row(r) /= c.row(r).sum();
    }
    return push(std::move(c), wants(a), [this, a](int out) {
      if (!wants(a)) return;
      const Mat& s = node_value(out);
      const Mat& g = node_grad(out);
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const S dot = g.row(r).dot(s.row(r));
        gref(a).row(r).array() +=
            s.row(r).array() * (g.row(r).array() - dot);
      }
    });
  }

  Var layernorm_rows(Var a, S eps = S(1e-5)) {
    const Mat& x = value(a);
    require(x.cols() >= 1, "layernorm_rows: empty rows");
    Mat y(x.rows(), x.cols());
    std::vector<S> inv_std(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const S mu = x.row(r).mean();
      const S var = (x.row(r).array() - mu).square().mean();
      const S is = S(1) / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(r)] = is;
      y.row(r) = ((x.row(r).array() - mu) * is).matrix();
    }
    return push(std::move(y), wants(a),
                [this, a, inv_std = std::move(inv_std)](int out) {
                  if (!wants(a)) return;
                  const Mat& yv = node_value(out);
                  const Mat& g = node_grad(out);
                  for (Eigen::Index r = 0; r < yv.rows(); ++r) {
                    const S gm = g.row(r).mean();
                    const S gy = g.row(r).cwiseProduct(yv.row(r)).mean();
                    gref(a).row(r).array() +=
                        inv_std[static_cast<std::size_t>(r)] *
                        (g.row(r).array() - gm - yv.row(r).array() * gy);
                  }
                });
  }

  // Weighted softmax cross-entropy per row: out(i,0) = w_i*(lse_i - l_{i,t_i})
  Var ce_rows(Var logits, std::vector<int> targets, std::vector<S> weights) {
    const Mat& l = value(logits);
    require(static_cast<Eigen::Index>(targets.size()) == l.rows() &&
                targets.size() == weights.size(),
            "ce_rows: one target and weight per row");
    for (std::size_t i = 0; i < targets.size(); ++i)
      require(targets[i] >= 0 && targets[i] < l.cols(),
              "ce_rows: target out of range");
    Mat c(l.rows(), 1);
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      const S mx = l.row(r).maxCoeff();
      const S lse = mx + std::log((l.row(r).array() - mx).exp().sum());
      c(r, 0) = weights[static_cast<std::size_t>(r)] *
                (lse - l(r, targets[static_cast<std::size_t>(r)]));
    }
    return push(std::move(c), wants(logits),
                [this, logits, targets = std::move(targets),
                 weights = std::move(weights)](int out) {
                  if (!wants(logits)) return;
                  const Mat& l = value(logits);
                  const Mat& g = node_grad(out);
                  for (Eigen::Index r = 0; r < l.rows(); ++r) {
                    const S mx = l.row(r).maxCoeff();
                    Eigen::Matrix<S, 1, Eigen::Dynamic> p =
                        (l.row(r).array() - mx).exp().matrix();
                    p /= p.sum();
                    p(0, targets[static_cast<std::size_t>(r)]) -= S(1);
                    gref(logits).row(r) +=
                        g(r, 0) * weights[static_cast<std::size_t>(r)] * p;
                  }
                });
  }

  // Patch-gather for convolution: (out_h*out_w) x (k*k*in_ch).
  // The plan is captured by reference and must outlive the tape.
  Var im2col(Var a, const Im2colPlan& plan) {
    const Mat& x = value(a);
    require(x.rows() == static_cast<Eigen::Index>(plan.in_h) * plan.in_w &&
                x.cols() == plan.in_ch,
            "im2col: input shape disagrees with plan");
    const int n_out = plan.out_h * plan.out_w;
    const int kk = plan.k * plan.k;
    Mat c = Mat::Zero(n_out, static_cast<Eigen::Index>(kk) * plan.in_ch);
    for (int p = 0; p < kk; ++p) {
      const auto& rows = plan.src_rows[static_cast<std::size_t>(p)];
      for (int r = 0; r < n_out; ++r)
        if (rows[static_cast<std::size_t>(r)] >= 0)
          c.block(r, static_cast<Eigen::Index>(p) * plan.in_ch, 1, plan.in_ch) =
              x.row(rows[static_cast<std::size_t>(r)]);
    }
    return push(std::move(c), wants(a), [this, a, &plan](int out) {
      if (!wants(a)) return;
      const Mat& g = node_grad(out);
      const int n_out = plan.out_h * plan.out_w;
      const int kk = plan.k * plan.k;
      for (int p = 0; p < kk; ++p) {
        const auto& rows = plan.src_rows[static_cast<std::size_t>(p)];
        for (int r = 0; r < n_out; ++r)
          if (rows[static_cast<std::size_t>(r)] >= 0)
            gref(a).row(rows[static_cast<std::size_t>(r)]) += g.block(
                r, static_cast<Eigen::Index>(p) * plan.in_ch, 1, plan.in_ch);
      }
    });
  }

  // Cuts the gradient: value copies through, backward stops here.
  Var detach(Var a) { return constant(value(a)); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;
    bool needs_grad = false;
  };

  const Node& node(Var x) const {
    require(x.id >= 0 && x.id < size(), "Tape: invalid Var");
    return nodes_[static_cast<std::size_t>(x.id)];
  }
  Node& node(Var x) {
    require(x.id >= 0 && x.id < size(), "Tape: invalid Var");
    return nodes_[static_cast<std::size_t>(x.id)];
  }
  bool wants(Var x) const { return node(x).needs_grad; }
  Mat& gref(Var x) { return node(x).grad; }
  const Mat& node_value(int id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
  }
  const Mat& node_grad(int id) const {
    return nodes_[static_cast<std::size_t>(id)].grad;
  }
  void same_shape(Var a, Var b, const char* op) {
    require(value(a).rows() == value(b).rows() &&
                value(a).cols() == value(b).cols(),
            std::string(op) + ": shape mismatch");
  }

  template <typename F>
  Var push(Mat v, bool needs_grad, F&& back) {
    require(v.allFinite(), "Tape: non-finite value produced");
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    if (needs_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      const int id = size();
      n.back = [back = std::forward<F>(back), id]() { back(id); };
    }
    nodes_.push_back(std::move(n));
    return Var{size() - 1};
  }

  Var push(Mat v, bool needs_grad, std::nullptr_t) {
    return push(std::move(v), needs_grad, [](int) {});
  }

  std::vector<Node> nodes_;
};

}  // namespace gazedetr
