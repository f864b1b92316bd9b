#pragma once

// Test-only oracles, deliberately independent of the library's
// implementation paths: exhaustive/bitmask matching, normal-equations least
// squares, and eigenvalues by Sylvester inertia bisection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "xtrial/rng.hpp"
#include "xtrial/stats.hpp"

namespace oracle {

// Minimum-cost perfect matching by explicit recursion over all pairings.
inline double exhaustive_min_matching(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    std::vector<bool> used(n, false);
    double best = std::numeric_limits<double>::infinity();
    auto recurse = [&](auto&& self, std::size_t matched, double acc) -> void {
        if (matched == n) {
            best = std::min(best, acc);
            return;
        }
        std::size_t first = 0;
        while (used[first]) ++first;
        used[first] = true;
        for (std::size_t j = first + 1; j < n; ++j) {
            if (used[j]) continue;
            used[j] = true;
            self(self, matched + 2, acc + cost[first][j]);
            used[j] = false;
        }
        used[first] = false;
    };
    recurse(recurse, 0, 0.0);
    return best;
}

// Same result via DP over subsets; feasible up to n ~ 20.
inline double bitmask_min_matching(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const std::size_t full = std::size_t{1} << n;
    std::vector<double> dp(full, std::numeric_limits<double>::infinity());
    dp[0] = 0.0;
    for (std::size_t mask = 0; mask < full; ++mask) {
        if (!std::isfinite(dp[mask])) continue;
        int first = -1;
        for (int v = 0; v < n; ++v) {
            if (!(mask & (std::size_t{1} << v))) {
                first = v;
                break;
            }
        }
        if (first < 0) continue;
        for (int j = first + 1; j < n; ++j) {
            if (mask & (std::size_t{1} << j)) continue;
            const std::size_t next =
                mask | (std::size_t{1} << first) | (std::size_t{1} << j);
            dp[next] = std::min(dp[next], dp[mask] + cost[first][j]);
        }
    }
    return dp[full - 1];
}

// Least squares via the normal equations and Gaussian elimination with
// partial pivoting.
inline std::vector<double> normal_equations_ols(const xtrial::stats::Matrix& x,
                                                const std::vector<double>& y) {
    const std::size_t n = x.rows(), p = x.cols();
    std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += x(r, i) * x(r, j);
            a[i][j] = s;
        }
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += x(r, i) * y[r];
        a[i][p] = s;
    }
    for (std::size_t col = 0; col < p; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < p; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        }
        std::swap(a[col], a[pivot]);
        if (std::fabs(a[col][col]) < 1e-12) throw std::runtime_error("oracle ols: singular");
        for (std::size_t r = 0; r < p; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
        }
    }
    std::vector<double> beta(p);
    for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
    return beta;
}

// Number of eigenvalues of symmetric A strictly below `lambda`, by counting
// negative pivots of an LDL^T factorization (Sylvester's law of inertia).
inline int eigen_count_below(const xtrial::stats::Matrix& a, double lambda) {
    const std::size_t p = a.rows();
    std::vector<std::vector<double>> m(p, std::vector<double>(p));
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) m[i][j] = a(i, j) - (i == j ? lambda : 0.0);
    }
    int negatives = 0;
    for (std::size_t k = 0; k < p; ++k) {
        double pivot = m[k][k];
        if (std::fabs(pivot) < 1e-300) pivot = -1e-300;  // treat exact zero as below
        if (pivot < 0.0) ++negatives;
        for (std::size_t i = k + 1; i < p; ++i) {
            const double f = m[i][k] / pivot;
            for (std::size_t j = k; j < p; ++j) m[i][j] -= f * m[k][j];
        }
    }
    return negatives;
}

// All eigenvalues of a symmetric matrix by inertia bisection, descending.
inline std::vector<double> eigenvalues_by_bisection(const xtrial::stats::Matrix& a,
                                                    double tol = 1e-12) {
    const std::size_t p = a.rows();
    double radius = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < p; ++j) row += std::fabs(a(i, j));
        radius = std::max(radius, row);
    }
    std::vector<double> eigenvalues(p);
    for (std::size_t k = 0; k < p; ++k) {
        // k-th smallest: smallest lambda with count_below(lambda) >= k+1
        double lo = -radius - 1.0, hi = radius + 1.0;
        for (int it = 0; it < 200 && hi - lo > tol; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (eigen_count_below(a, mid) >= static_cast<int>(k) + 1) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        eigenvalues[k] = 0.5 * (lo + hi);
    }
    std::reverse(eigenvalues.begin(), eigenvalues.end());
    return eigenvalues;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Kolmogorov-Smirnov distance between a sample and Uniform(0,1).
inline double ks_uniform(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max({d, std::fabs(xs[i] - lo), std::fabs(xs[i] - hi)});
    }
    return d;
}

}  // namespace oracle
