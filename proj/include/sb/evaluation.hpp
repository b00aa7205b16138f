// Two-sample comparison metrics: exact assignment-based 2-Wasserstein
// distance (sliced approximation above the exact-size cap), mode coverage
// against a mixture's means, the energy distance, and drift-field grids
// for velocity-field plots.

#pragma once

#include "sb/gaussian_mixture.hpp"
#include "sb/matrix.hpp"
#include "sb/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace sb {

inline constexpr int kExactW2Cap = 4096;

namespace detail {

/// Minimum-cost perfect matching on a dense n x n cost matrix
/// (shortest augmenting path with potentials). Returns the total cost.
inline double min_cost_assignment(const std::vector<double>& cost, int n) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = inf;
            const double* row = cost.data() + static_cast<std::size_t>(i0 - 1) * n;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = row[j - 1] - u[i0] - v[j];
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
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += cost[static_cast<std::size_t>(p[j] - 1) * n + (j - 1)];
    return total;
}

inline double sq_dist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
        double r = a[j] - b[j];
        s += r * r;
    }
    return s;
}

} // namespace detail

struct W2Result {
    double value = 0.0;
    bool exact = true;  // false: sliced approximation (256 random projections)
};

/// 2-Wasserstein distance between equal-size point multisets under squared
/// Euclidean ground cost: exact optimal assignment up to n = 4096, sliced
/// approximation (labeled) beyond.
inline W2Result wasserstein2_full(const Matrix& a, const Matrix& b, uint64_t slice_seed = 7) {
    if (a.cols != b.cols) throw std::invalid_argument("wasserstein2: dimension mismatch");
    const int n = a.rows;
    if (n == 0 || b.rows == 0) throw std::invalid_argument("wasserstein2: empty sample set");
    if (n <= kExactW2Cap) {
        if (b.rows != n) throw std::invalid_argument("wasserstein2: exact mode needs equal sample counts");
        std::vector<double> cost(static_cast<std::size_t>(n) * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                cost[static_cast<std::size_t>(i) * n + j] = detail::sq_dist(a.row(i), b.row(j), a.cols);
        return {std::sqrt(detail::min_cost_assignment(cost, n) / n), true};
    }
    // sliced: mean over random unit directions of the 1D W2^2 (sorted match)
    const int n_proj = 256;
    Rng rng(slice_seed);
    std::vector<double> pa(a.rows), pb(b.rows);
    double acc = 0.0;
    for (int k = 0; k < n_proj; ++k) {
        std::vector<double> dir(a.cols);
        double norm = 0.0;
        for (auto& v : dir) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : dir) v /= norm;
        for (int i = 0; i < a.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < a.cols; ++j) s += dir[j] * a.at(i, j);
            pa[i] = s;
        }
        for (int i = 0; i < b.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < b.cols; ++j) s += dir[j] * b.at(i, j);
            pb[i] = s;
        }
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        // quantile coupling on the common grid of the larger set
        std::size_t m = std::max(pa.size(), pb.size());
        double w = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double qa = pa[i * pa.size() / m];
            double qb = pb[i * pb.size() / m];
            w += (qa - qb) * (qa - qb);
        }
        acc += w / static_cast<double>(m);
    }
    return {std::sqrt(acc / n_proj), false};
}

inline double wasserstein2(const Matrix& a, const Matrix& b) { return wasserstein2_full(a, b).value; }

// ---------------------------------------------------------------------------

struct ModeReport {
    std::vector<long> counts;
    std::vector<double> fractions;
    double radius = 0.0;
    std::vector<int> missed;  // component indices with zero assigned samples

    bool all_covered() const { return missed.empty(); }
    double min_fraction() const {
        return fractions.empty() ? 0.0 : *std::min_element(fractions.begin(), fractions.end());
    }
};

/// Assign each sample to the nearest mixture mean if within radius.
inline ModeReport mode_coverage(const Matrix& samples, const GaussianMixture& g, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("mode_coverage: radius must be > 0");
    if (samples.cols != g.d) throw std::invalid_argument("mode_coverage: dimension mismatch");
    const int K = g.num_components();
    double min_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j)
            min_gap = std::min(min_gap, std::sqrt(detail::sq_dist(g.means[i].data(), g.means[j].data(), g.d)));
    if (K > 1 && !(radius < 0.5 * min_gap))
        throw std::invalid_argument("mode_coverage: radius overlaps neighboring modes");

    ModeReport report;
    report.counts.assign(K, 0);
    report.radius = radius;
    const double r2 = radius * radius;
    for (int i = 0; i < samples.rows; ++i) {
        int best = -1;
        double best_d = r2;
        for (int c = 0; c < K; ++c) {
            double d2 = detail::sq_dist(samples.row(i), g.means[c].data(), g.d);
            if (d2 <= best_d) {
                best_d = d2;
                best = c;
            }
        }
        if (best >= 0) report.counts[best]++;
    }
    report.fractions.resize(K);
    for (int c = 0; c < K; ++c) {
        report.fractions[c] = samples.rows > 0 ? static_cast<double>(report.counts[c]) / samples.rows : 0.0;
        if (report.counts[c] == 0) report.missed.push_back(c);
    }
    return report;
}

// ---------------------------------------------------------------------------

/// Energy distance 2 E|A-B| - E|A-A'| - E|B-B'| via all-pairs sums.
inline double energy_distance(const Matrix& a, const Matrix& b) {
    if (a.rows == 0 || b.rows == 0) throw std::invalid_argument("energy_distance: empty sample set");
    if (a.cols != b.cols) throw std::invalid_argument("energy_distance: dimension mismatch");
    auto mean_cross = [&](const Matrix& u, const Matrix& v) {
        double s = 0.0;
        for (int i = 0; i < u.rows; ++i)
            for (int j = 0; j < v.rows; ++j)
                s += std::sqrt(detail::sq_dist(u.row(i), v.row(j), u.cols));
        return s / (static_cast<double>(u.rows) * v.rows);
    };
    return 2.0 * mean_cross(a, b) - mean_cross(a, a) - mean_cross(b, b);
}

// ---------------------------------------------------------------------------

struct GridSpec {
    double xmin = -6.0, xmax = 6.0;
    double ymin = -6.0, ymax = 6.0;
    int nx = 21, ny = 21;
};

struct FieldGrid {
    GridSpec spec;
    std::vector<double> x, y;  // node coordinates, row-major (ny rows of nx)
    std::vector<double> u, v;  // drift components at each node
};

/// Evaluate a 2D drift callable on a regular grid.
inline FieldGrid drift_field(const std::function<std::vector<double>(double, const std::vector<double>&)>& drift,
                             double t, const GridSpec& spec) {
    if (spec.nx < 2 || spec.ny < 2) throw std::invalid_argument("drift_field: resolution must be >= 2 per axis");
    FieldGrid grid;
    grid.spec = spec;
    for (int iy = 0; iy < spec.ny; ++iy) {
        double y = spec.ymin + (spec.ymax - spec.ymin) * iy / (spec.ny - 1);
        for (int ix = 0; ix < spec.nx; ++ix) {
            double x = spec.xmin + (spec.xmax - spec.xmin) * ix / (spec.nx - 1);
            auto d = drift(t, {x, y});
            grid.x.push_back(x);
            grid.y.push_back(y);
            grid.u.push_back(d[0]);
            grid.v.push_back(d[1]);
        }
    }
    return grid;
}

} // namespace sb
