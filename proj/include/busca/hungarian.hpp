#pragma once

// Rectangular linear assignment (Kuhn-Munkres with potentials, O(n^2 m)).

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "busca/core.hpp"

namespace busca {

using AssignmentPairs = std::vector<std::pair<int, int>>;

namespace detail {

// Full assignment of every row of an n x m matrix, n <= m. Returns col per row.
inline std::vector<int> solve_rows(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    const int m = static_cast<int>(a.cols());
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
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
            for (int j = 0; j <= m; ++j) {
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
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j) {
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace detail

/// Matching restricted to pairs with cost < gate. Maximizes the number of
/// matched pairs first, then minimizes their total cost. Output is sorted by row.
inline AssignmentPairs hungarian(const Eigen::MatrixXd& cost,
                                 double gate = std::numeric_limits<double>::infinity()) {
    AssignmentPairs out;
    const Eigen::Index n = cost.rows();
    const Eigen::Index m = cost.cols();
    if (n == 0 || m == 0) return out;
    if (!cost.allFinite()) throw InvalidInput("hungarian: cost matrix must be finite");

    // Infeasible pairs get a penalty larger than any feasible total, so the
    // solver trades any amount of feasible cost for one more feasible pair.
    double sum_abs = 0.0;
    bool any_feasible = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            if (cost(i, j) < gate) {
                sum_abs += std::abs(cost(i, j));
                any_feasible = true;
            }
        }
    }
    if (!any_feasible) return out;
    const double penalty = 2.0 * sum_abs + 1.0;

    const bool transposed = n > m;
    Eigen::MatrixXd work = transposed ? Eigen::MatrixXd(cost.transpose()) : cost;
    const double shift = work.minCoeff() < 0.0 ? -work.minCoeff() : 0.0;
    for (Eigen::Index i = 0; i < work.rows(); ++i) {
        for (Eigen::Index j = 0; j < work.cols(); ++j) {
            work(i, j) = work(i, j) < gate ? work(i, j) + shift : penalty + shift;
        }
    }

    const std::vector<int> assign = detail::solve_rows(work);
    for (int r = 0; r < static_cast<int>(assign.size()); ++r) {
        const int c = assign[r];
        if (c < 0) continue;
        const int row = transposed ? c : r;
        const int col = transposed ? r : c;
        if (cost(row, col) < gate) out.emplace_back(row, col);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace busca
