// Noise-conditional score estimator s_theta(x, sigma_tilde), trained with the
// lambda-weighted denoising score-matching objective: per training example a
// noise variance is drawn uniformly on [eps_sigma^2, sigma^2] and the network
// is matched against -z / sigma_tilde^2 on the noised point.

#pragma once

#include "sb/adam.hpp"
#include "sb/embedding.hpp"
#include "sb/gaussian_mixture.hpp"
#include "sb/mlp.hpp"
#include "sb/rng.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sb {

struct ScoreModel {
    MlpNetwork net;
    double sigma_max = 1.0;
    double sigma_floor = 0.01;  // eps_sigma, smallest trained noise level
};

struct TrainConfig {
    int batch_size = 128;
    int iterations = 20000;
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double sigma_floor_frac = 0.01;  // eps_sigma = frac * sigma
    uint64_t seed = 1;

    void validate(double sigma) const {
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations must be >= 0");
        if (!(sigma_floor_frac * sigma < sigma))
            throw std::invalid_argument("TrainConfig: sigma_floor must be below sigma");
    }
};

struct LossTrace {
    std::vector<double> loss;  // one entry per iteration
};

namespace detail {
inline std::vector<std::span<double>> param_spans(MlpNetwork& net) {
    std::vector<std::span<double>> out;
    net.for_each_param([&](std::span<double> p) { out.push_back(p); });
    return out;
}
inline std::vector<std::span<const double>> grad_spans(MlpGrads& g) {
    std::vector<std::span<const double>> out;
    g.for_each_param([&](std::span<double> p) { out.emplace_back(p.data(), p.size()); });
    return out;
}
} // namespace detail

/// One DSM minibatch: returns the loss and accumulated parameter gradients.
inline std::pair<double, MlpGrads> dsm_loss(const ScoreModel& model, const Matrix& batch_x,
                                            Rng& rng) {
    const int n = batch_x.rows;
    const int d = batch_x.cols;
    if (n < 1) throw std::invalid_argument("dsm_loss: empty batch");
    const double sigma = model.sigma_max;
    const double floor2 = model.sigma_floor * model.sigma_floor;

    Matrix noised(n, d);
    Matrix embeds(n, model.net.embed_dim);
    std::vector<double> sig2(n);
    Matrix z(n, d);
    for (int i = 0; i < n; ++i) {
        sig2[i] = rng.uniform(floor2, sigma * sigma);
        double sd = std::sqrt(sig2[i]);
        for (int j = 0; j < d; ++j) {
            z.at(i, j) = sd * rng.normal();
            noised.at(i, j) = batch_x.at(i, j) + z.at(i, j);
        }
        embeds.set_row(i, sinusoidal_embedding(sd / sigma, model.net.embed_dim));
    }

    MlpTrace trace;
    Matrix s = mlp_forward_batch(model.net, noised, embeds, &trace);

    // loss = (1/n) sum_i sigma_i^2 |s_i + z_i / sigma_i^2|^2
    double loss = 0.0;
    Matrix upstream(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            double resid = s.at(i, j) + z.at(i, j) / sig2[i];
            loss += sig2[i] * resid * resid;
            upstream.at(i, j) = 2.0 * sig2[i] * resid / n;
        }
    }
    loss /= n;
    if (!std::isfinite(loss)) throw std::runtime_error("dsm_loss: non-finite loss");
    return {loss, mlp_backward_batch(model.net, trace, embeds, upstream)};
}

/// Train a score model on (pre-centered) data. arch lists the hidden widths.
inline std::pair<ScoreModel, LossTrace> train_score(const Matrix& data, double sigma,
                                                    const TrainConfig& cfg,
                                                    const std::vector<int>& hidden,
                                                    int embed_dim = 64) {
    if (data.rows < 1) throw std::invalid_argument("train_score: empty data");
    cfg.validate(sigma);
    Rng rng = Rng(cfg.seed).stream(0x5c03e);
    std::vector<int> dims;
    dims.push_back(data.cols);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(data.cols);

    ScoreModel model;
    model.net = mlp_init(dims, embed_dim, rng);
    model.sigma_max = sigma;
    model.sigma_floor = cfg.sigma_floor_frac * sigma;

    AdamState adam(model.net.num_params());
    adam.lr = cfg.lr;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.eps = cfg.eps;
    adam.weight_decay = cfg.weight_decay;

    LossTrace trace;
    trace.loss.reserve(cfg.iterations);
    Matrix batch(cfg.batch_size, data.cols);
    auto params = detail::param_spans(model.net);
    for (int it = 0; it < cfg.iterations; ++it) {
        for (int i = 0; i < cfg.batch_size; ++i) {
            int row = static_cast<int>(rng.below(static_cast<uint64_t>(data.rows)));
            std::copy(data.row(row), data.row(row) + data.cols, batch.row(i));
        }
        auto [loss, grads] = dsm_loss(model, batch, rng);
        trace.loss.push_back(loss);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_score: diverged at iteration " + std::to_string(it));
        adam_update(adam, params, detail::grad_spans(grads));
    }
    return {std::move(model), std::move(trace)};
}

/// Batched estimate at a common noise level.
inline Matrix score_estimate_batch(const ScoreModel& model, const Matrix& x, double sigma_tilde) {
    if (sigma_tilde < model.sigma_floor - 1e-12 || sigma_tilde > model.sigma_max + 1e-12)
        throw std::invalid_argument("score_estimate: sigma_tilde outside trained range");
    Matrix embeds(x.rows, model.net.embed_dim);
    auto e = sinusoidal_embedding(sigma_tilde / model.sigma_max, model.net.embed_dim);
    for (int i = 0; i < x.rows; ++i) embeds.set_row(i, e);
    return mlp_forward_batch(model.net, x, embeds);
}

inline std::vector<double> score_estimate(const ScoreModel& model, const std::vector<double>& x,
                                          double sigma_tilde) {
    Matrix xm(1, static_cast<int>(x.size()));
    xm.set_row(0, x);
    return score_estimate_batch(model, xm, sigma_tilde).row_vec(0);
}

inline void save_score_model(const std::string& path, ScoreModel& model) {
    CheckpointMeta meta;
    meta.kind = 1;
    meta.meta[0] = model.sigma_max;
    meta.meta[1] = 0.0;
    meta.meta[2] = model.sigma_floor;
    save_network_file(path, model.net, meta);
}

inline ScoreModel load_score_model(const std::string& path) {
    CheckpointMeta meta;
    ScoreModel model;
    model.net = load_network_file(path, &meta);
    if (meta.kind != 1) throw std::runtime_error("checkpoint is not a score model: " + path);
    model.sigma_max = meta.meta[0];
    model.sigma_floor = meta.meta[2];
    return model;
}

} // namespace sb
