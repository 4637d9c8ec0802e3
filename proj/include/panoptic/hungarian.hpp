#pragma once

#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace panoptic {

using CostMatrix = Eigen::MatrixXd;

/// Marks an entry that may not be assigned.
inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

using Assignment = std::vector<std::pair<std::size_t, std::size_t>>;

/// Minimum-cost one-to-one assignment (rows to columns). The matrix may be
/// rectangular; forbidden entries are never returned, and among assignments
/// with the most allowed pairs the cheapest is chosen. Pairs are sorted by row.
Assignment hungarian(const CostMatrix& cost);

double assignment_cost(const CostMatrix& cost, const Assignment& assignment);

}  // namespace panoptic
