#pragma once

// Exact minimum-cost assignment on a square matrix (Kuhn-Munkres with
// potentials, O(n^3)). Used by the earth mover's distance.

#include <cmath>
#include <limits>
#include <vector>

#include "cass/core.hpp"

namespace cass {

struct Assignment {
  std::vector<int> row_to_col;
  double cost = 0.0;
};

// cost is n*n row-major; cost[i*n + j] is the price of pairing row i with
// column j. All entries must be finite.
inline Assignment solve_assignment(const std::vector<double>& cost, int n) {
  check(n >= 1, "assignment needs at least one row");
  check(cost.size() == static_cast<std::size_t>(n) * n,
        "assignment cost matrix size mismatch");
  for (double c : cost)
    if (!std::isfinite(c)) throw numeric_error("non-finite assignment cost");

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[(i0 - 1) * static_cast<std::size_t>(n) + (j - 1)] -
                     u[i0] - v[j];
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
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  Assignment out;
  out.row_to_col.assign(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) out.row_to_col[p[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i)
    out.cost += cost[i * static_cast<std::size_t>(n) + out.row_to_col[i]];
  return out;
}

}  // namespace cass
