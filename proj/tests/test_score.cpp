#include "sb/score_model.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

namespace {

sb::ScoreModel zero_model(int d, int embed_dim, double sigma, double floor_frac) {
    sb::Rng rng(1);
    sb::ScoreModel m;
    m.net = sb::mlp_init({d, 8, d}, embed_dim, rng);
    for (auto& w : m.net.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
    for (auto& b : m.net.biases) std::fill(b.begin(), b.end(), 0.0);
    for (auto& e : m.net.embed_projections) std::fill(e.data.begin(), e.data.end(), 0.0);
    m.sigma_max = sigma;
    m.sigma_floor = floor_frac * sigma;
    return m;
}

// Replays the internal draw order of dsm_loss to recover the (sigma_i, z_i)
// pairs it will use, so tests can compute the expected loss independently.
struct DsmDraws {
    std::vector<double> sig2;
    sb::Matrix z;
};

DsmDraws replay_draws(const sb::ScoreModel& model, const sb::Matrix& batch, sb::Rng rng) {
    DsmDraws out;
    const int n = batch.rows, d = batch.cols;
    out.sig2.resize(n);
    out.z = sb::Matrix(n, d);
    const double floor2 = model.sigma_floor * model.sigma_floor;
    const double s2 = model.sigma_max * model.sigma_max;
    for (int i = 0; i < n; ++i) {
        out.sig2[i] = rng.uniform(floor2, s2);
        double sd = std::sqrt(out.sig2[i]);
        for (int j = 0; j < d; ++j) out.z.at(i, j) = sd * rng.normal();
    }
    return out;
}

std::vector<double*> param_ptrs(sb::MlpNetwork& net) {
    std::vector<double*> out;
    net.for_each_param([&](std::span<double> p) {
        for (auto& v : p) out.push_back(&v);
    });
    return out;
}

std::vector<double> grad_flat(sb::MlpGrads& g) {
    std::vector<double> out;
    g.for_each_param([&](std::span<double> p) { out.insert(out.end(), p.begin(), p.end()); });
    return out;
}

} // namespace

TEST_CASE("zero network loss equals the weighted noise norm") {
    // With s == 0 the summand is sigma^2 |z/sigma^2|^2 = |z|^2 / sigma^2;
    // near-degenerate noise range pins sigma^2 at sigma_max^2 = 1.
    auto model = zero_model(2, 4, 1.0, 0.999999);
    sb::Matrix batch(3, 2);
    batch.data = {0.5, -1.0, 2.0, 0.0, -0.7, 0.3};
    sb::Rng rng(99);
    auto draws = replay_draws(model, batch, rng);
    double want = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) want += draws.z.at(i, j) * draws.z.at(i, j) / draws.sig2[i];
    want /= 3.0;
    auto [loss, grads] = sb::dsm_loss(model, batch, rng);
    REQUIRE_THAT(loss, Catch::Matchers::WithinRel(want, 1e-10));
    REQUIRE(loss >= 0.0);
}

TEST_CASE("dsm loss is nonnegative for random models") {
    sb::Rng init(3);
    for (int trial = 0; trial < 20; ++trial) {
        sb::ScoreModel m;
        m.net = sb::mlp_init({2, 6, 2}, 4, init);
        m.sigma_max = 1.0;
        m.sigma_floor = 0.01;
        sb::Matrix batch(4, 2);
        for (auto& v : batch.data) v = init.normal();
        sb::Rng rng(trial);
        auto [loss, grads] = sb::dsm_loss(m, batch, rng);
        REQUIRE(loss >= 0.0);
    }
}

TEST_CASE("dsm gradients match finite differences on 50 random configurations") {
    sb::Rng meta(505);
    const double h = 1e-5;
    for (int trial = 0; trial < 50; ++trial) {
        int d = 1 + static_cast<int>(meta.below(2));
        sb::ScoreModel m;
        m.net = sb::mlp_init({d, 2 + static_cast<int>(meta.below(5)), d}, 4, meta);
        m.sigma_max = meta.uniform(0.5, 1.5);
        m.sigma_floor = 0.05 * m.sigma_max;
        sb::Matrix batch(1 + static_cast<int>(meta.below(3)), d);
        for (auto& v : batch.data) v = meta.normal();
        const uint64_t noise_seed = meta.next_u64();

        sb::Rng r0(noise_seed);
        auto [loss, grads] = sb::dsm_loss(m, batch, r0);
        auto gflat = grad_flat(grads);
        auto ptrs = param_ptrs(m.net);
        REQUIRE(gflat.size() == ptrs.size());
        for (std::size_t k = 0; k < ptrs.size(); k += 7) {  // stride keeps runtime sane
            double save = *ptrs[k];
            *ptrs[k] = save + h;
            sb::Rng rp(noise_seed);
            double fp = sb::dsm_loss(m, batch, rp).first;
            *ptrs[k] = save - h;
            sb::Rng rm(noise_seed);
            double fm = sb::dsm_loss(m, batch, rm).first;
            *ptrs[k] = save;
            double fd = (fp - fm) / (2.0 * h);
            double scale = std::max({std::abs(fd), std::abs(gflat[k]), 1.0});
            REQUIRE(std::abs(fd - gflat[k]) / scale <= 1e-4);
        }
    }
}

TEST_CASE("zero iterations returns the initialized network unchanged") {
    sb::Matrix data(16, 1);
    sb::Rng rng(8);
    for (auto& v : data.data) v = rng.normal();
    sb::TrainConfig cfg;
    cfg.iterations = 0;
    auto [model, trace] = sb::train_score(data, 1.0, cfg, {8}, 4);
    REQUIRE(trace.loss.empty());
    sb::Rng rng2 = sb::Rng(cfg.seed).stream(0x5c03e);
    auto want = sb::mlp_init({1, 8, 1}, 4, rng2);
    std::vector<double> a, b;
    model.net.for_each_param([&](std::span<double> p) { a.insert(a.end(), p.begin(), p.end()); });
    want.for_each_param([&](std::span<double> p) { b.insert(b.end(), p.begin(), p.end()); });
    REQUIRE(a == b);
}

TEST_CASE("training on a 1D Gaussian approaches the analytic score") {
    // target N(0,1), sigma = 1: score of q_sigma_tilde is -x / (1 + sigma_tilde^2)
    sb::Rng drng(12);
    sb::Matrix data(4000, 1);
    for (auto& v : data.data) v = drng.normal();

    sb::TrainConfig cfg;
    cfg.iterations = 10000;
    cfg.lr = 1e-3;
    cfg.seed = 2;
    auto [model, trace] = sb::train_score(data, 1.0, cfg, {32, 32}, 16);

    auto mse_at = [&](const sb::ScoreModel& m) {
        double mse = 0.0;
        int count = 0;
        for (double st : {0.2, 0.5, 1.0}) {
            for (double x = -3.0; x <= 3.0001; x += 0.25) {
                double want = -x / (1.0 + st * st);
                double got = sb::score_estimate(m, {x}, st)[0];
                mse += (got - want) * (got - want);
                ++count;
            }
        }
        return mse / count;
    };
    REQUIRE(mse_at(model) < 0.02);
    REQUIRE_THAT(sb::score_estimate(model, {0.5}, 1.0)[0], Catch::Matchers::WithinAbs(-0.25, 0.1));

    // smoothed loss trace trends downward; allow small jitter at the noise floor
    const int w = 1000;
    auto avg = [&](int start) {
        double s = 0.0;
        for (int i = start; i < start + w; ++i) s += trace.loss[i];
        return s / w;
    };
    double first = avg(0);
    double prev = first;
    double last = first;
    for (int start = w; start + w <= static_cast<int>(trace.loss.size()); start += w) {
        double cur = avg(start);
        REQUIRE(cur <= prev * 1.02);
        prev = cur;
        last = cur;
    }
    REQUIRE(last < first);

    // more iterations improve the oracle MSE
    sb::TrainConfig shorter = cfg;
    shorter.iterations = 500;
    auto [early, trace2] = sb::train_score(data, 1.0, shorter, {32, 32}, 16);
    REQUIRE(mse_at(model) < mse_at(early));
}

TEST_CASE("score estimates are deterministic and range-checked") {
    sb::Rng rng(5);
    sb::ScoreModel m;
    m.net = sb::mlp_init({2, 8, 2}, 4, rng);
    m.sigma_max = 1.0;
    m.sigma_floor = 0.01;
    auto a = sb::score_estimate(m, {0.3, -0.4}, 0.7);
    auto b = sb::score_estimate(m, {0.3, -0.4}, 0.7);
    REQUIRE(a == b);
    for (double v : a) REQUIRE(std::isfinite(v));
    REQUIRE_THROWS(sb::score_estimate(m, {0.0, 0.0}, 0.001));
    REQUIRE_THROWS(sb::score_estimate(m, {0.0, 0.0}, 1.5));
}

TEST_CASE("score checkpoint round trip preserves estimates") {
    sb::Rng rng(6);
    sb::ScoreModel m;
    m.net = sb::mlp_init({2, 8, 2}, 4, rng);
    m.sigma_max = 1.25;
    m.sigma_floor = 0.0125;
    sb::save_score_model("/tmp/sb_test_score.sbnn", m);
    auto m2 = sb::load_score_model("/tmp/sb_test_score.sbnn");
    REQUIRE(m2.sigma_max == m.sigma_max);
    REQUIRE(m2.sigma_floor == m.sigma_floor);
    REQUIRE(sb::score_estimate(m2, {0.1, 0.9}, 0.5) == sb::score_estimate(m, {0.1, 0.9}, 0.5));
}
