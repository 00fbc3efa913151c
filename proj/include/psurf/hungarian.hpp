#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace psurf {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  double cost = 0.0;
};

/// Minimum-cost assignment for an n x m cost matrix (row-major vectors).
///
/// Rectangular inputs are padded to a square matrix with a sentinel cost
/// larger than any real assignment, so every row (or column, whichever side is
/// smaller) is matched. Shortest augmenting path with potentials, O(k^3) for
/// k = max(n, m).
inline Assignment hungarian_match(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0 || cost[0].empty()) throw ParameterError("hungarian_match: empty cost matrix");
  const int m = static_cast<int>(cost[0].size());
  double max_abs = 0.0;
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != m) throw ParameterError("hungarian_match: ragged cost matrix");
    for (double c : row) {
      if (!std::isfinite(c)) throw ParameterError("hungarian_match: non-finite cost");
      max_abs = std::max(max_abs, std::abs(c));
    }
  }
  const int k = std::max(n, m);
  const double sentinel = (max_abs + 1.0) * (k + 1);
  auto c = [&](int i, int j) { return (i < n && j < m) ? cost[i][j] : sentinel; };

  // 1-based arrays; p[j] is the row matched to column j, 0 for none.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
  std::vector<int> p(k + 1, 0), way(k + 1, 0);
  for (int i = 1; i <= k; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(k + 1, inf);
    std::vector<char> used(k + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= k; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= k; ++j) {
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
    } while (j0 != 0);
  }

  Assignment out;
  for (int j = 1; j <= k; ++j) {
    const int i = p[j] - 1, col = j - 1;
    if (i < n && col < m) {
      out.pairs.emplace_back(i, col);
      out.cost += cost[i][col];
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

}  // namespace psurf
