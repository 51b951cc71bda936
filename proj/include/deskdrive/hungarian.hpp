#pragma once

// Minimum-cost bipartite assignment via the potentials (Jonker-Volgenant
// style) algorithm, O(rows^2 * cols). Rows must not exceed cols; every row
// receives a distinct column.

#include <limits>
#include <vector>

#include "deskdrive/tensor.hpp"

namespace deskdrive {

struct AssignmentResult {
    std::vector<std::size_t> col_of_row;  // assignment per row
    double total_cost = 0.0;
};

inline AssignmentResult solve_assignment(const Tensor& cost) {
    require(cost.rank() == 2, "assignment expects a rank-2 cost matrix");
    const std::size_t n = cost.rows(), m = cost.cols();
    require(n <= m, "assignment expects rows <= cols");
    const double INF = std::numeric_limits<double>::infinity();

    // 1-based potentials formulation
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, INF);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = INF;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost.at2(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
                if (minv[j] < delta) { delta = minv[j]; j1 = j; }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) { u[p[j]] += delta; v[j] -= delta; }
                else minv[j] -= delta;
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    AssignmentResult res;
    res.col_of_row.assign(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j] != 0) res.col_of_row[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) res.total_cost += cost.at2(i, res.col_of_row[i]);
    return res;
}

}  // namespace deskdrive
