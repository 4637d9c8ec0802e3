#include "panoptic/hungarian.hpp"

#include <algorithm>
#include <cmath>

#include "panoptic/errors.hpp"

namespace panoptic {

Assignment hungarian(const CostMatrix& cost) {
  const std::size_t rows = static_cast<std::size_t>(cost.rows());
  const std::size_t cols = static_cast<std::size_t>(cost.cols());
  if (rows == 0 || cols == 0) return {};

  // Forbidden cells become a penalty larger than any allowed assignment, so
  // the optimum first maximizes the number of allowed pairs.
  double allowed_sum = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (c == kForbidden) continue;
      if (!std::isfinite(c)) throw Error("cost matrix entries must be finite or forbidden");
      allowed_sum += std::abs(c);
    }
  }
  const double penalty = 2.0 * allowed_sum + 1.0;
  const std::size_t n = std::max(rows, cols);
  auto at = [&](std::size_t i, std::size_t j) {
    if (i >= rows || j >= cols) return penalty;
    const double c = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return c == kForbidden ? penalty : c;
  };

  // Shortest augmenting paths with row/column potentials, 1-based with a
  // virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = match[j] - 1;
    const std::size_t c = j - 1;
    if (i < rows && c < cols && cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) != kForbidden) {
      out.emplace_back(i, c);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double assignment_cost(const CostMatrix& cost, const Assignment& assignment) {
  double total = 0.0;
  for (const auto& [i, j] : assignment) total += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return total;
}

}  // namespace panoptic
