#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "gazedetr/common.hpp"

namespace gazedetr {

// One-to-one assignment of min(n,m) query/target pairs. Query and target
// indices are unique; pairs are sorted by query index. Queries absent from
// the list are implicitly "no object".
struct MatchAssignment {
  std::vector<std::pair<int, int>> pairs;
};

namespace detail {

// Kuhn-Munkres with potentials on a square matrix (minimization).
// Returns col -> row (1-indexed internally, converted by caller) and the
// final dual potentials.
inline void km_square(const Eigen::MatrixXd& a, std::vector<int>& row_of_col,
                      std::vector<double>& u, std::vector<double>& v) {
  const int n = static_cast<int>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  u.assign(n + 1, 0.0);
  v.assign(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  row_of_col.assign(n, -1);
  for (int j = 1; j <= n; ++j) row_of_col[j - 1] = p[j] - 1;
}

// Kuhn's augmenting-path matching over an explicit adjacency list.
// match_col[c] = row or -1. Returns true if `row` can be matched.
inline bool try_augment(int row, const std::vector<std::vector<int>>& adj,
                        std::vector<int>& match_col, std::vector<char>& seen) {
  for (int c : adj[row]) {
    if (seen[c]) continue;
    seen[c] = 1;
    if (match_col[c] == -1 ||
        try_augment(match_col[c], adj, match_col, seen)) {
      match_col[c] = row;
      return true;
    }
  }
  return false;
}

// Perfect matching feasibility on the padded tight graph with some rows
// restricted to a single forced column.
inline bool perfect_matching_exists(const std::vector<std::vector<int>>& adj,
                                    int s) {
  std::vector<int> match_col(s, -1);
  for (int r = 0; r < s; ++r) {
    std::vector<char> seen(s, 0);
    if (!try_augment(r, adj, match_col, seen)) return false;
  }
  return true;
}

}  // namespace detail

// Minimum-cost bipartite assignment of min(n,m) pairs. When several
// assignments attain the optimum, the lexicographically smallest pair list
// is returned: all optimal assignments live on the tight edges of the dual
// solution, so the refinement fixes query rows in ascending order to the
// smallest target that still admits a perfect tight matching.
inline MatchAssignment hungarian_match(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  MatchAssignment out;
  if (n == 0 || m == 0) return out;
  require(cost.allFinite(), "hungarian_match: cost has NaN/inf entries");

  // pad to square with zero-cost dummies; every perfect matching then
  // contains exactly min(n,m) real pairs
  const int s = std::max(n, m);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s, s);
  a.topLeftCorner(n, m) = cost;

  std::vector<int> row_of_col;
  std::vector<double> u, v;
  detail::km_square(a, row_of_col, u, v);

  // tight edges: zero reduced cost up to rounding noise
  const double eps = 1e-9 * (1.0 + cost.cwiseAbs().maxCoeff());
  std::vector<std::vector<int>> tight(s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j)
      if (a(i, j) - u[i + 1] - v[j + 1] <= eps) tight[i].push_back(j);

  // lexicographic refinement: rows in ascending order, forced to the
  // smallest feasible real column; rows that cannot take a real column
  // keep their full dummy adjacency
  std::vector<std::vector<int>> adj = tight;
  std::vector<char> col_used(s, 0);
  for (int q = 0; q < n; ++q) {
    int chosen = -1;
    for (int t : tight[q]) {
      if (t >= m || col_used[t]) continue;
      auto saved = adj[q];
      adj[q] = {t};
      if (detail::perfect_matching_exists(adj, s)) {
        chosen = t;
        break;
      }
      adj[q] = saved;
    }
    if (chosen >= 0) {
      col_used[chosen] = 1;
      out.pairs.emplace_back(q, chosen);
    } else {
      // restrict q to dummy columns so later rows cannot be displaced
      std::vector<int> dummies;
      for (int t : tight[q])
        if (t >= m) dummies.push_back(t);
      adj[q] = dummies;
    }
  }
  return out;
}

inline double assignment_cost(const Eigen::MatrixXd& cost,
                              const MatchAssignment& a) {
  double total = 0.0;
  for (const auto& [q, t] : a.pairs) total += cost(q, t);
  return total;
}

}  // namespace gazedetr
