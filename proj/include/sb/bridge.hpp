// Two-stage Euler-Maruyama bridge sampler. Stage 1 drives a point mass at the
// origin to the smoothed target q_sigma with a self-normalized Monte-Carlo
// drift built from the density-ratio and score estimators; stage 2 anneals
// q_sigma down to the target with the noise-conditional score. Both stages
// can also run with the closed-form drifts of a Gaussian-mixture target,
// which makes the integrator testable independently of learning.

#pragma once

#include "sb/gaussian_mixture.hpp"
#include "sb/parallel.hpp"
#include "sb/ratio_model.hpp"
#include "sb/score_model.hpp"

#include <atomic>

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sb {

struct BridgeConfig {
    double sigma = 1.0;
    double tau = 5.0;
    int n1 = 1000;
    int n2 = 1000;
    int n3 = 1;
    uint64_t seed = 1;
    bool final_denoise = false;

    void validate() const {
        if (!(sigma > 0.0)) throw std::invalid_argument("BridgeConfig: sigma must be > 0");
        if (!(tau > 0.0)) throw std::invalid_argument("BridgeConfig: tau must be > 0");
        if (n1 < 1 || n2 < 1 || n3 < 1)
            throw std::invalid_argument("BridgeConfig: n1, n2, n3 must be >= 1");
    }
};

enum class Stage { one, two, done };

struct ParticleBatch {
    Matrix positions;
    Stage stage = Stage::one;
    int step_index = 0;
};

/// Drift plug-ins for the sampler. Either the closed-form mixture drifts or
/// batched estimator callbacks (learned nets, or exact oracles routed through
/// the same Monte-Carlo estimator for testing).
struct DriftSource {
    // Monte-Carlo path
    std::function<std::vector<double>(const Matrix&)> ratio;       // f_hat per row
    std::function<Matrix(const Matrix&, double)> score;            // s_hat(row, sigma_tilde)
    double sigma_floor = 0.0;  // clamp for stage-2 noise-level queries

    // Closed-form path
    bool closed_form = false;
    GaussianMixture target;

    static DriftSource learned(const ScoreModel& score_model, const RatioModel& ratio_model) {
        if (std::abs(score_model.sigma_max - ratio_model.sigma) > 1e-12)
            throw std::invalid_argument("DriftSource: score and ratio models trained at different sigma");
        DriftSource s;
        s.ratio = [&ratio_model](const Matrix& x) { return ratio_estimate_batch(ratio_model, x); };
        s.score = [&score_model](const Matrix& x, double st) {
            return score_estimate_batch(score_model, x, st);
        };
        s.sigma_floor = score_model.sigma_floor;
        return s;
    }

    /// Score net only; enough for stage 2 (the skip-stage-1 ablation).
    static DriftSource learned_stage2_only(const ScoreModel& score_model) {
        DriftSource s;
        s.score = [&score_model](const Matrix& x, double st) {
            return score_estimate_batch(score_model, x, st);
        };
        s.sigma_floor = score_model.sigma_floor;
        return s;
    }

    /// Closed-form D1/D2 of a mixture target.
    static DriftSource exact(const GaussianMixture& g) {
        DriftSource s;
        s.closed_form = true;
        s.target = g;
        return s;
    }

    /// Exact ratio and score substituted into the Monte-Carlo estimator.
    static DriftSource exact_mc(const GaussianMixture& g, double sigma, double tau) {
        DriftSource s;
        s.ratio = [g, sigma, tau](const Matrix& x) {
            std::vector<double> out(x.rows);
            parallel_for(0, x.rows, [&](int i) {
                out[i] = density_ratio_exact(g, sigma, tau, x.row_vec(i));
            });
            return out;
        };
        GaussianMixture smoothed = gmm_smooth(g, sigma);
        s.score = [smoothed](const Matrix& x, double) {
            Matrix out(x.rows, x.cols);
            parallel_for(0, x.rows, [&](int i) { out.set_row(i, gmm_score(smoothed, x.row_vec(i))); });
            return out;
        };
        return s;
    }
};

/// Optional per-step hook; receives the step just completed and the state.
using StepObserver = std::function<void(Stage, int step, const Matrix&)>;

namespace detail {

inline constexpr uint64_t kStage1Tag = 0x51a6e1;
inline constexpr uint64_t kStage2Tag = 0x51a6e2;

inline std::vector<Rng> particle_streams(const Rng& base, uint64_t stage_tag, int n) {
    Rng stage_rng = base.stream(stage_tag);
    std::vector<Rng> streams;
    streams.reserve(n);
    for (int i = 0; i < n; ++i) streams.push_back(stage_rng.stream(static_cast<uint64_t>(i)));
    return streams;
}

inline void check_finite(const Matrix& x, Stage stage, int step) {
    for (double v : x.data)
        if (!std::isfinite(v))
            throw std::runtime_error("bridge: non-finite particle at stage " +
                                     std::string(stage == Stage::one ? "1" : "2") + " step " +
                                     std::to_string(step));
}

/// Combine pre-drawn draws into the stage-1 drift for one particle:
///   b = sum_{i<n3} f(x~_i) [s(x~_i) + sqrt((1-t)/tau) z_i] / sum_{i>=n3} f(x~_i) + x/tau
inline std::vector<double> stage1_combine(const std::vector<double>& x, double t,
                                          const BridgeConfig& cfg,
                                          const std::vector<double>& fvals, const Matrix& scores,
                                          const Matrix& z) {
    const int d = static_cast<int>(x.size());
    const double zscale = std::sqrt((1.0 - t) / cfg.tau);
    std::vector<double> num(d, 0.0);
    double den = 0.0;
    for (int i = 0; i < cfg.n3; ++i)
        for (int j = 0; j < d; ++j)
            num[j] += fvals[i] * (scores.at(i, j) + zscale * z.at(i, j));
    for (int i = cfg.n3; i < 2 * cfg.n3; ++i) den += fvals[i];
    if (!(den > 1e-300))
        throw std::runtime_error("stage1_drift: ratio denominator underflow");
    std::vector<double> b(d);
    for (int j = 0; j < d; ++j) b[j] = num[j] / den + x[j] / cfg.tau;
    return b;
}

} // namespace detail

/// Single-particle stage-1 Monte-Carlo drift b(x_k) at time t = k/N1. Draws
/// 2*N3 fresh standard normals from rng; the numerator uses draws 1..N3, the
/// denominator draws N3+1..2N3.
inline std::vector<double> stage1_drift(const DriftSource& drifts, const std::vector<double>& x,
                                        double t, const BridgeConfig& cfg, Rng& rng) {
    if (t < 0.0 || t >= 1.0) throw std::invalid_argument("stage1_drift: t must be in [0,1)");
    const int d = static_cast<int>(x.size());
    const double spread = std::sqrt(cfg.tau * (1.0 - t));
    Matrix z(2 * cfg.n3, d), xt(2 * cfg.n3, d);
    for (int i = 0; i < 2 * cfg.n3; ++i)
        for (int j = 0; j < d; ++j) {
            z.at(i, j) = rng.normal();
            xt.at(i, j) = x[j] + spread * z.at(i, j);
        }
    std::vector<double> fvals = drifts.ratio(xt);
    Matrix xnum(cfg.n3, d);
    for (int i = 0; i < cfg.n3; ++i) std::copy(xt.row(i), xt.row(i) + d, xnum.row(i));
    Matrix scores = drifts.score(xnum, cfg.sigma);
    return detail::stage1_combine(x, t, cfg, fvals, scores, z);
}

/// In-place stage 1 over an already-shaped (zero-initialized) batch.
inline void run_stage1_inplace(const DriftSource& drifts, ParticleBatch& batch,
                               const BridgeConfig& cfg, const Rng& base,
                               const StepObserver& observer = {}) {
    cfg.validate();
    const int n = batch.positions.rows;
    const int d = batch.positions.cols;
    auto streams = detail::particle_streams(base, detail::kStage1Tag, n);
    const double h = cfg.tau / cfg.n1;
    const double noise = std::sqrt(h);

    Matrix xt(n > 0 ? n * 2 * cfg.n3 : 0, d);
    Matrix z(n > 0 ? n * 2 * cfg.n3 : 0, d);
    for (int k = 0; k < cfg.n1; ++k) {
        const double t = static_cast<double>(k) / cfg.n1;
        if (drifts.closed_form) {
            parallel_for(0, n, [&](int p) {
                auto b = drift_stage1_exact(drifts.target, cfg.sigma, cfg.tau, t,
                                            batch.positions.row_vec(p));
                double* xp = batch.positions.row(p);
                for (int j = 0; j < d; ++j) xp[j] += h * b[j] + noise * streams[p].normal();
            });
        } else {
            const double spread = std::sqrt(cfg.tau * (1.0 - t));
            parallel_for(0, n, [&](int p) {
                const double* xp = batch.positions.row(p);
                for (int i = 0; i < 2 * cfg.n3; ++i) {
                    int row = p * 2 * cfg.n3 + i;
                    for (int j = 0; j < d; ++j) {
                        z.at(row, j) = streams[p].normal();
                        xt.at(row, j) = xp[j] + spread * z.at(row, j);
                    }
                }
            });
            std::vector<double> fvals = drifts.ratio(xt);
            Matrix xnum(n * cfg.n3, d);
            for (int p = 0; p < n; ++p)
                for (int i = 0; i < cfg.n3; ++i)
                    std::copy(xt.row(p * 2 * cfg.n3 + i), xt.row(p * 2 * cfg.n3 + i) + d,
                              xnum.row(p * cfg.n3 + i));
            Matrix scores = drifts.score(xnum, cfg.sigma);
            const double zscale = std::sqrt((1.0 - t) / cfg.tau);
            std::atomic<bool> underflow{false};
            parallel_for(0, n, [&](int p) {
                double* xp = batch.positions.row(p);
                std::vector<double> num(d, 0.0);
                double den = 0.0;
                for (int i = 0; i < cfg.n3; ++i) {
                    int zrow = p * 2 * cfg.n3 + i;
                    int srow = p * cfg.n3 + i;
                    double f = fvals[zrow];
                    for (int j = 0; j < d; ++j)
                        num[j] += f * (scores.at(srow, j) + zscale * z.at(zrow, j));
                }
                for (int i = cfg.n3; i < 2 * cfg.n3; ++i) den += fvals[p * 2 * cfg.n3 + i];
                if (!(den > 1e-300)) {
                    underflow.store(true);
                    return;
                }
                for (int j = 0; j < d; ++j)
                    xp[j] += h * (num[j] / den + xp[j] / cfg.tau) + noise * streams[p].normal();
            });
            if (underflow.load())
                throw std::runtime_error("run_stage1: ratio denominator underflow at step " +
                                         std::to_string(k));
        }
        detail::check_finite(batch.positions, Stage::one, k);
        if (observer) observer(Stage::one, k, batch.positions);
    }
    batch.stage = Stage::two;
    batch.step_index = 0;
}

/// Stage 1: N1 Euler-Maruyama steps from a point mass at the origin toward
/// q_sigma. Particles evolve independently on per-particle RNG streams.
inline ParticleBatch run_stage1(const DriftSource& drifts, int n_particles, int dim,
                                const BridgeConfig& cfg, const Rng& base,
                                const StepObserver& observer = {}) {
    ParticleBatch batch;
    batch.positions = Matrix(n_particles, dim);
    batch.stage = Stage::one;
    run_stage1_inplace(drifts, batch, cfg, base, observer);
    return batch;
}

/// Stage 2: N2 annealed steps from (approximately) q_sigma to the target,
/// plus the optional drift-only denoising step.
inline ParticleBatch run_stage2(const DriftSource& drifts, ParticleBatch start,
                                const BridgeConfig& cfg, const Rng& base,
                                const StepObserver& observer = {}) {
    cfg.validate();
    const int n = start.positions.rows;
    const int d = start.positions.cols;
    auto streams = detail::particle_streams(base, detail::kStage2Tag, n);
    const double h = cfg.sigma * cfg.sigma / cfg.n2;
    const double noise = cfg.sigma / std::sqrt(static_cast<double>(cfg.n2));

    auto drift_at = [&](const Matrix& x, int k) -> Matrix {
        double level = std::sqrt(1.0 - static_cast<double>(k) / cfg.n2) * cfg.sigma;
        if (drifts.closed_form) {
            Matrix out(x.rows, x.cols);
            double t = static_cast<double>(k) / cfg.n2;
            parallel_for(0, x.rows, [&](int p) {
                out.set_row(p, drift_stage2_exact(drifts.target, cfg.sigma, t, x.row_vec(p)));
            });
            return out;
        }
        return drifts.score(x, std::max(level, drifts.sigma_floor));
    };

    for (int k = 0; k < cfg.n2; ++k) {
        Matrix b = drift_at(start.positions, k);
        parallel_for(0, n, [&](int p) {
            double* xp = start.positions.row(p);
            const double* bp = b.row(p);
            for (int j = 0; j < d; ++j) xp[j] += h * bp[j] + noise * streams[p].normal();
        });
        detail::check_finite(start.positions, Stage::two, k);
        if (observer) observer(Stage::two, k, start.positions);
    }
    if (cfg.final_denoise && n > 0) {
        // one extra drift-only step at noise level sigma / sqrt(N2)
        double level = cfg.sigma / std::sqrt(static_cast<double>(cfg.n2));
        Matrix b;
        if (drifts.closed_form) {
            b = Matrix(n, d);
            double t = 1.0 - 1.0 / cfg.n2;
            for (int p = 0; p < n; ++p)
                b.set_row(p, drift_stage2_exact(drifts.target, cfg.sigma, t, start.positions.row_vec(p)));
        } else {
            b = drifts.score(start.positions, std::max(level, drifts.sigma_floor));
        }
        for (int p = 0; p < n; ++p)
            for (int j = 0; j < d; ++j) start.positions.at(p, j) += h * b.at(p, j);
        detail::check_finite(start.positions, Stage::two, cfg.n2);
    }
    start.stage = Stage::done;
    start.step_index = cfg.n2;
    return start;
}

/// End-to-end Algorithm: stage 1 from a point mass, then stage 2.
inline Matrix sample(const DriftSource& drifts, int n_particles, int dim, const BridgeConfig& cfg,
                     const Rng& base, const StepObserver& observer = {}) {
    ParticleBatch batch;
    batch.positions = Matrix(n_particles, dim);
    batch.stage = Stage::one;
    run_stage1_inplace(drifts, batch, cfg, base, observer);
    batch = run_stage2(drifts, std::move(batch), cfg, base, observer);
    return batch.positions;
}

/// Stage-2 start for the skip-stage-1 ablation: particles from N(0, tau I).
inline ParticleBatch gaussian_start(int n_particles, int dim, const BridgeConfig& cfg,
                                    const Rng& base) {
    ParticleBatch batch;
    batch.positions = Matrix(n_particles, dim);
    batch.stage = Stage::two;
    Rng init = base.stream(0x1417);
    double sd = std::sqrt(cfg.tau);
    for (auto& v : batch.positions.data) v = sd * init.normal();
    return batch;
}

// ---------------------------------------------------------------------------
// Inpainting (stage 2 with masked re-projection) and interpolation.
// ---------------------------------------------------------------------------

struct InpaintTask {
    std::vector<double> y;     // observed entries, zero where mask is 0
    std::vector<double> mask;  // entries in {0, 1}
    BridgeConfig config;

    InpaintTask(std::vector<double> y_in, std::vector<double> mask_in, BridgeConfig cfg)
        : y(std::move(y_in)), mask(std::move(mask_in)), config(cfg) {
        if (y.size() != mask.size()) throw std::invalid_argument("InpaintTask: y/mask size mismatch");
        for (double m : mask)
            if (m != 0.0 && m != 1.0) throw std::invalid_argument("InpaintTask: mask must be 0/1");
        for (std::size_t j = 0; j < y.size(); ++j)
            if (mask[j] == 0.0 && y[j] != 0.0)
                throw std::invalid_argument("InpaintTask: y must be zero where mask is 0");
    }
};

/// Stage-2 inpainting: the perturbation z is drawn once and reused in every
/// re-projection, so the k-th iterate matches q at noise level
/// sqrt(1-(k+1)/N2) sigma on the observed coordinates; the final projection
/// restores y exactly.
inline std::vector<double> inpaint(const InpaintTask& task, const ScoreModel& score, Rng rng) {
    const BridgeConfig& cfg = task.config;
    cfg.validate();
    const int d = static_cast<int>(task.y.size());
    const double sigma = cfg.sigma;
    std::vector<double> z(d), x(d);
    for (int j = 0; j < d; ++j) z[j] = rng.normal();
    for (int j = 0; j < d; ++j) x[j] = task.y[j] + sigma * z[j];

    const double h = sigma * sigma / cfg.n2;
    const double noise = sigma / std::sqrt(static_cast<double>(cfg.n2));
    for (int k = 0; k < cfg.n2; ++k) {
        double level = std::max(std::sqrt(1.0 - static_cast<double>(k) / cfg.n2) * sigma,
                                score.sigma_floor);
        auto b = score_estimate(score, x, level);
        for (int j = 0; j < d; ++j) x[j] += h * b[j] + noise * rng.normal();
        double decay = std::sqrt(1.0 - static_cast<double>(k + 1) / cfg.n2) * sigma;
        for (int j = 0; j < d; ++j)
            x[j] = x[j] * (1.0 - task.mask[j]) + (task.y[j] + decay * z[j]) * task.mask[j];
    }
    return x;
}

/// Noised linear interpolation denoised by a stage-2 run starting at noise
/// level sigma_interp.
inline std::vector<double> interpolate(const std::vector<double>& x_a,
                                       const std::vector<double>& x_b, double lambda,
                                       double sigma_interp, const ScoreModel& score,
                                       const BridgeConfig& cfg, Rng rng) {
    if (x_a.size() != x_b.size()) throw std::invalid_argument("interpolate: dimension mismatch");
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("interpolate: lambda must be in [0,1]");
    if (sigma_interp > score.sigma_max + 1e-12)
        throw std::invalid_argument("interpolate: sigma_interp exceeds the model's trained sigma");
    const int d = static_cast<int>(x_a.size());
    std::vector<double> x(d);
    for (int j = 0; j < d; ++j)
        x[j] = (1.0 - lambda) * x_a[j] + lambda * x_b[j] + sigma_interp * rng.normal();

    const double h = sigma_interp * sigma_interp / cfg.n2;
    const double noise = sigma_interp / std::sqrt(static_cast<double>(cfg.n2));
    for (int k = 0; k < cfg.n2; ++k) {
        double level = std::sqrt(1.0 - static_cast<double>(k) / cfg.n2) * sigma_interp;
        level = std::clamp(level, score.sigma_floor, score.sigma_max);
        auto b = score_estimate(score, x, level);
        for (int j = 0; j < d; ++j) x[j] += h * b[j] + noise * rng.normal();
    }
    if (cfg.final_denoise) {
        double level = std::clamp(sigma_interp / std::sqrt(static_cast<double>(cfg.n2)),
                                  score.sigma_floor, score.sigma_max);
        auto b = score_estimate(score, x, level);
        for (int j = 0; j < d; ++j) x[j] += h * b[j];
    }
    return x;
}

} // namespace sb
