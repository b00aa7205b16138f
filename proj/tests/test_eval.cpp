#include "sb/evaluation.hpp"
#include "sb/gaussian_mixture.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace {

sb::Matrix random_points(sb::Rng& rng, int n, int d, double scale = 1.0) {
    sb::Matrix m(n, d);
    for (auto& v : m.data) v = scale * rng.normal();
    return m;
}

// Permutation brute force over all n! assignments.
double brute_force_w2(const sb::Matrix& a, const sb::Matrix& b) {
    const int n = a.rows;
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double cost = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < a.cols; ++j) {
                double r = a.at(i, j) - b.at(perm[i], j);
                cost += r * r;
            }
        }
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / n);
}

double assignment_cost(const sb::Matrix& a, const sb::Matrix& b, const std::vector<int>& perm) {
    double cost = 0.0;
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) {
            double r = a.at(i, j) - b.at(perm[i], j);
            cost += r * r;
        }
    return std::sqrt(cost / a.rows);
}

} // namespace

TEST_CASE("W2 of identical sets is zero and of two points is their distance") {
    sb::Rng rng(1);
    auto a = random_points(rng, 10, 2);
    REQUIRE_THAT(sb::wasserstein2(a, a), Catch::Matchers::WithinAbs(0.0, 1e-9));
    sb::Matrix p(1, 2), q(1, 2);
    p.data = {0.0, 0.0};
    q.data = {3.0, 4.0};
    REQUIRE_THAT(sb::wasserstein2(p, q), Catch::Matchers::WithinRel(5.0, 1e-12));
}

TEST_CASE("exact W2 equals permutation brute force on 200 small instances") {
    sb::Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 2 + static_cast<int>(rng.below(6));  // n in [2, 7]
        int d = 1 + static_cast<int>(rng.below(3));
        auto a = random_points(rng, n, d, 2.0);
        auto b = random_points(rng, n, d, 2.0);
        auto got = sb::wasserstein2_full(a, b);
        REQUIRE(got.exact);
        REQUIRE_THAT(got.value, Catch::Matchers::WithinRel(brute_force_w2(a, b), 1e-10));
    }
}

TEST_CASE("exact W2 is a metric on 100 random triples") {
    sb::Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 2 + static_cast<int>(rng.below(7));
        auto a = random_points(rng, n, 2);
        auto b = random_points(rng, n, 2);
        auto c = random_points(rng, n, 2);
        double ab = sb::wasserstein2(a, b);
        double ba = sb::wasserstein2(b, a);
        double ac = sb::wasserstein2(a, c);
        double cb = sb::wasserstein2(c, b);
        REQUIRE_THAT(ab, Catch::Matchers::WithinAbs(ba, 1e-9));
        REQUIRE(ab >= 0.0);
        REQUIRE(ab <= ac + cb + 1e-9);
        REQUIRE_THAT(sb::wasserstein2(a, a), Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
}

TEST_CASE("exact W2 lower-bounds random permutations") {
    sb::Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 5 + static_cast<int>(rng.below(20));
        auto a = random_points(rng, n, 2);
        auto b = random_points(rng, n, 2);
        double w = sb::wasserstein2(a, b);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        for (int p = 0; p < 50; ++p) {
            for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
            REQUIRE(w <= assignment_cost(a, b, perm) + 1e-9);
        }
    }
}

TEST_CASE("W2 input validation and sliced fallback labeling") {
    sb::Rng rng(19);
    auto a = random_points(rng, 4, 2);
    auto b = random_points(rng, 5, 2);
    REQUIRE_THROWS(sb::wasserstein2(a, b));  // unequal counts in exact mode
    auto c = random_points(rng, 3, 3);
    REQUIRE_THROWS(sb::wasserstein2(a, c));  // dimension mismatch

    auto big_a = random_points(rng, sb::kExactW2Cap + 10, 2);
    auto big_b = random_points(rng, sb::kExactW2Cap + 10, 2);
    auto res = sb::wasserstein2_full(big_a, big_b);
    REQUIRE_FALSE(res.exact);
    REQUIRE(res.value >= 0.0);
}

TEST_CASE("sliced W2 tracks the exact distance for separated Gaussians") {
    sb::Rng rng(23);
    const int n = sb::kExactW2Cap + 200;
    auto a = random_points(rng, n, 2);
    auto b = random_points(rng, n, 2);
    for (int i = 0; i < n; ++i) b.at(i, 0) += 4.0;  // shift in x
    auto res = sb::wasserstein2_full(a, b);
    REQUIRE_FALSE(res.exact);
    // 1D projections of a pure translation average below the full distance
    // but must still see most of the shift
    REQUIRE(res.value >= 2.0);
    REQUIRE(res.value <= 4.5);
}

TEST_CASE("mode coverage counts samples at the means") {
    auto g = sb::six_modes_mixture();
    sb::Matrix samples(12, 2);
    for (int i = 0; i < 12; ++i) {
        samples.at(i, 0) = g.means[i % 6][0];
        samples.at(i, 1) = g.means[i % 6][1];
    }
    auto report = sb::mode_coverage(samples, g, 1.0);
    REQUIRE(report.all_covered());
    for (double f : report.fractions) REQUIRE_THAT(f, Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-12));
    double frac_sum = 0.0;
    for (double f : report.fractions) frac_sum += f;
    REQUIRE(frac_sum <= 1.0 + 1e-12);
}

TEST_CASE("mode coverage reports missed modes") {
    auto g = sb::six_modes_mixture();
    sb::Matrix samples(10, 2);
    for (int i = 0; i < 10; ++i) {
        samples.at(i, 0) = g.means[0][0];
        samples.at(i, 1) = g.means[0][1];
    }
    auto report = sb::mode_coverage(samples, g, 1.0);
    REQUIRE(report.missed.size() == 5);
    REQUIRE(report.fractions[0] == 1.0);
    REQUIRE_FALSE(report.all_covered());
}

TEST_CASE("mode coverage on exact mixture draws is near uniform") {
    auto g = sb::six_modes_mixture();
    sb::Rng rng(29);
    auto samples = sb::gmm_sample(g, 5000, rng);
    auto report = sb::mode_coverage(samples, g, 1.0);
    REQUIRE(report.all_covered());
    for (double f : report.fractions) REQUIRE(std::abs(f - 1.0 / 6.0) <= 0.03);
}

TEST_CASE("mode coverage rejects overlapping radii") {
    auto g = sb::six_modes_mixture();
    sb::Matrix samples(1, 2);
    REQUIRE_THROWS(sb::mode_coverage(samples, g, 3.0));
    REQUIRE_THROWS(sb::mode_coverage(samples, g, 0.0));
}

TEST_CASE("energy distance basics") {
    sb::Rng rng(31);
    auto a = random_points(rng, 50, 2);
    REQUIRE_THAT(sb::energy_distance(a, a), Catch::Matchers::WithinAbs(0.0, 1e-12));
    auto b = random_points(rng, 50, 2);
    REQUIRE_THAT(sb::energy_distance(a, b), Catch::Matchers::WithinRel(sb::energy_distance(b, a), 1e-12));

    sb::Matrix p(1, 1), q(1, 1);
    p.data = {0.0};
    q.data = {3.0};
    REQUIRE_THAT(sb::energy_distance(p, q), Catch::Matchers::WithinRel(6.0, 1e-12));
}

TEST_CASE("energy distance of shifted 1D Gaussians matches quadrature") {
    // E|A - B| for A ~ N(0,1), B ~ N(c,1): |A-B| is folded normal with
    // mean mu = c, variance 2 -> E = sqrt(2)*sqrt(2/pi)*exp(-c^2/4)
    //           + c * erf(c/2); E|A-A'| = 2/sqrt(pi)
    const double c = 1.5;
    const double s = std::sqrt(2.0);
    auto folded_mean = [&](double mu) {
        return s * std::sqrt(2.0 / M_PI) * std::exp(-mu * mu / (2 * s * s)) +
               mu * std::erf(mu / (s * std::sqrt(2.0)));
    };
    double want = 2.0 * folded_mean(c) - 2.0 * folded_mean(0.0);

    sb::Rng rng(37);
    const int n = 4000;
    sb::Matrix a(n, 1), b(n, 1);
    for (auto& v : a.data) v = rng.normal();
    for (int i = 0; i < n; ++i) b.at(i, 0) = c + rng.normal();
    REQUIRE_THAT(sb::energy_distance(a, b), Catch::Matchers::WithinRel(want, 0.10));
}

TEST_CASE("drift field evaluates the callable on the grid") {
    sb::GridSpec spec;
    spec.nx = spec.ny = 5;
    auto field = sb::drift_field(
        [](double, const std::vector<double>& x) {
            return std::vector<double>{-x[0] / 0.25, -x[1] / 0.25};
        },
        1.0, spec);
    REQUIRE(field.x.size() == 25);
    for (std::size_t i = 0; i < field.x.size(); ++i) {
        REQUIRE_THAT(field.u[i], Catch::Matchers::WithinAbs(-field.x[i] / 0.25, 1e-12));
        REQUIRE_THAT(field.v[i], Catch::Matchers::WithinAbs(-field.y[i] / 0.25, 1e-12));
    }
    // symmetric mixture: zero drift at the origin (center node of odd grid)
    auto g = sb::six_modes_mixture();
    auto field2 = sb::drift_field(
        [&](double t, const std::vector<double>& x) { return sb::drift_stage2_exact(g, 1.0, t, x); },
        0.5, spec);
    std::size_t center = 2 * 5 + 2;
    REQUIRE_THAT(field2.u[center], Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(field2.v[center], Catch::Matchers::WithinAbs(0.0, 1e-12));
    sb::GridSpec bad;
    bad.nx = 1;
    REQUIRE_THROWS(sb::drift_field([](double, const std::vector<double>& x) { return x; }, 0.0, bad));
}
