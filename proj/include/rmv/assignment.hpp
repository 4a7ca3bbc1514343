#pragma once

// Dense square linear assignment by shortest augmenting paths with dual
// potentials (Hungarian / Jonker-Volgenant family), O(n^3).
//
// Ties are broken by the lowest column index, so the result is a pure
// function of the cost matrix.

#include <limits>
#include <span>
#include <vector>

#include "errors.hpp"

namespace rmv {

struct AssignmentResult {
    std::vector<std::size_t> column_of_row;
    double cost = 0.0;
};

// cost is row-major n x n.
inline AssignmentResult solve_assignment(std::span<const double> cost, std::size_t n) {
    if (cost.size() != n * n) throw DimensionError("assignment: cost matrix must be n x n");
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based internals; column 0 is the virtual source.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if (j1 == 0) throw NumericalError("assignment: non-finite costs");
            for (std::size_t j = 0; j <= n; ++j) {
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
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    AssignmentResult r;
    r.column_of_row.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j]) r.column_of_row[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) r.cost += cost[i * n + r.column_of_row[i]];
    return r;
}

} // namespace rmv
