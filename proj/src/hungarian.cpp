#include "dynscene/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dynscene
{

namespace
{

// Shortest augmenting path with row/column potentials. Requires rows <= cols.
// Index 0 of the 1-based work arrays is a virtual column.
Assignment solve_wide(const Eigen::MatrixXd & a)
{
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(m + 1, 0.0);
  std::vector<int> row_of_col(m + 1, 0);
  std::vector<int> way(m + 1, 0);

  for (int i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = row_of_col[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) {
          continue;
        }
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
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[row_of_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != 0);
    do {
      const int j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  out.reserve(n);
  for (int j = 1; j <= m; ++j) {
    if (row_of_col[j] != 0) {
      out.emplace_back(row_of_col[j] - 1, j - 1);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Assignment solve(const Eigen::MatrixXd & cost)
{
  if (cost.rows() <= cost.cols()) {
    return solve_wide(cost);
  }
  Assignment swapped = solve_wide(cost.transpose());
  for (auto & [r, c] : swapped) {
    std::swap(r, c);
  }
  std::sort(swapped.begin(), swapped.end());
  return swapped;
}

double optimal_cost(const Eigen::MatrixXd & cost, const std::vector<int> & rows, const std::vector<int> & cols)
{
  if (rows.empty() || cols.empty()) {
    return 0.0;
  }
  Eigen::MatrixXd sub(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      sub(i, j) = cost(rows[i], cols[j]);
    }
  }
  double total = 0.0;
  for (const auto & [r, c] : solve(sub)) {
    total += sub(r, c);
  }
  return total;
}

// Among all optimal assignments, the one whose sorted pair list is
// lexicographically smallest: rows in order take the lowest column that
// still admits an optimal completion.
Assignment lexicographic_optimum(const Eigen::MatrixXd & cost, double best)
{
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const auto k = static_cast<std::size_t>(std::min(n, m));
  const double tol = 1e-9 * (1.0 + std::abs(best));

  std::vector<int> cols(m);
  for (int j = 0; j < m; ++j) {
    cols[j] = j;
  }
  Assignment out;
  double acc = 0.0;
  for (int i = 0; i < n && out.size() < k; ++i) {
    std::vector<int> later_rows;
    for (int r = i + 1; r < n; ++r) {
      later_rows.push_back(r);
    }
    const std::size_t still_needed = k - out.size() - 1;
    bool taken = false;
    if (std::min(later_rows.size(), cols.size() - 1) >= still_needed) {
      for (std::size_t c = 0; c < cols.size() && !taken; ++c) {
        std::vector<int> rest = cols;
        rest.erase(rest.begin() + c);
        const double total = acc + cost(i, cols[c]) + optimal_cost(cost, later_rows, rest);
        if (total <= best + tol) {
          out.emplace_back(i, cols[c]);
          acc += cost(i, cols[c]);
          cols = std::move(rest);
          taken = true;
        }
      }
    }
    // otherwise row i stays unassigned (only possible when rows > cols)
  }
  return out;
}

}  // namespace

Assignment hungarian_assign(const Eigen::MatrixXd & cost)
{
  if (cost.rows() == 0 || cost.cols() == 0) {
    return {};
  }
  if (!cost.allFinite()) {
    throw std::invalid_argument("hungarian_assign: cost matrix must be finite");
  }
  Assignment out = solve(cost);
  if (cost.size() > kTieBreakMaxCells) {
    return out;
  }
  Assignment lex = lexicographic_optimum(cost, assignment_cost(cost, out));
  return lex.size() == out.size() ? lex : out;
}

double assignment_cost(const Eigen::MatrixXd & cost, const Assignment & pairs)
{
  double total = 0.0;
  for (const auto & [r, c] : pairs) {
    total += cost(r, c);
  }
  return total;
}

}  // namespace dynscene
