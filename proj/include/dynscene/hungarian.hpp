#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

namespace dynscene
{

using Assignment = std::vector<std::pair<int, int>>;

/// Matrices up to this many cells get the exact tie-break below; larger
/// ones return the solver's (still optimal, deterministic) assignment.
inline constexpr long kTieBreakMaxCells = 1024;

/// Minimum-cost rectangular assignment (Kuhn-Munkres with potentials,
/// O(n^2 m)). Returns min(rows, cols) (row, col) pairs sorted by row.
/// Among equal-cost optima the lexicographically smallest pair list wins,
/// i.e. lower rows first, then lower columns. Throws std::invalid_argument
/// on non-finite costs.
Assignment hungarian_assign(const Eigen::MatrixXd & cost);

/// Sum of cost over the given pairs.
double assignment_cost(const Eigen::MatrixXd & cost, const Assignment & pairs);

}  // namespace dynscene
