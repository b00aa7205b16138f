// Density-ratio estimator f_hat(x) = exp(r_phi(x)) between the smoothed
// target q_sigma and the Gaussian reference Phi_sqrt(tau), trained as a
// logistic-regression classifier between the two sample streams.

#pragma once

#include "sb/gaussian_mixture.hpp"
#include "sb/score_model.hpp"  // TrainConfig, param/grad span helpers

#include <cmath>
#include <iostream>
#include <utility>

namespace sb {

struct RatioModel {
    MlpNetwork net;           // scalar output, no conditioning embedding
    double sigma = 1.0;
    double tau = 1.0;
    double logit_clamp = 30.0;
};

/// Numerically stable log(1 + exp(x)).
inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Mean over pairs of softplus(-r(x_q)) + softplus(r(x_ref)), with gradients.
inline std::pair<double, MlpGrads> logistic_loss(const RatioModel& model, const Matrix& batch_q,
                                                 const Matrix& batch_ref) {
    const int n = batch_q.rows;
    if (n < 1 || batch_ref.rows != n)
        throw std::invalid_argument("logistic_loss: batches must be nonempty and equal size");

    MlpTrace trace_q, trace_r;
    Matrix none;
    Matrix rq = mlp_forward_batch(model.net, batch_q, none, &trace_q);
    Matrix rr = mlp_forward_batch(model.net, batch_ref, none, &trace_r);

    double loss = 0.0;
    Matrix up_q(n, 1), up_r(n, 1);
    for (int i = 0; i < n; ++i) {
        loss += softplus(-rq.at(i, 0)) + softplus(rr.at(i, 0));
        up_q.at(i, 0) = -sigmoid(-rq.at(i, 0)) / n;
        up_r.at(i, 0) = sigmoid(rr.at(i, 0)) / n;
    }
    loss /= n;
    if (!std::isfinite(loss)) throw std::runtime_error("logistic_loss: non-finite loss");

    MlpGrads g = mlp_backward_batch(model.net, trace_q, none, up_q);
    MlpGrads g2 = mlp_backward_batch(model.net, trace_r, none, up_r);
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        for (std::size_t i = 0; i < g.weights[l].size(); ++i)
            g.weights[l].data[i] += g2.weights[l].data[i];
        for (std::size_t i = 0; i < g.biases[l].size(); ++i)
            g.biases[l][i] += g2.biases[l][i];
    }
    return {loss, std::move(g)};
}

/// Train the ratio net. Each step noises fresh data rows into the q_sigma
/// batch and draws a fresh reference batch from Phi_sqrt(tau).
inline std::pair<RatioModel, LossTrace> train_ratio(const Matrix& data, double sigma, double tau,
                                                    const TrainConfig& cfg,
                                                    const std::vector<int>& hidden) {
    if (data.rows < 1) throw std::invalid_argument("train_ratio: empty data");
    if (!(tau > 0.0)) throw std::invalid_argument("train_ratio: tau must be > 0");
    if (tau < sigma * sigma)
        std::cerr << "warning: train_ratio with tau < sigma^2; recommended tau >= sigma^2\n";
    Rng rng = Rng(cfg.seed).stream(0x4a710);
    std::vector<int> dims;
    dims.push_back(data.cols);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);

    RatioModel model;
    model.net = mlp_init(dims, 0, rng);
    model.sigma = sigma;
    model.tau = tau;

    AdamState adam(model.net.num_params());
    adam.lr = cfg.lr;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.eps = cfg.eps;
    adam.weight_decay = cfg.weight_decay;

    LossTrace trace;
    trace.loss.reserve(cfg.iterations);
    const double sqrt_tau = std::sqrt(tau);
    Matrix bq(cfg.batch_size, data.cols), br(cfg.batch_size, data.cols);
    auto params = detail::param_spans(model.net);
    for (int it = 0; it < cfg.iterations; ++it) {
        for (int i = 0; i < cfg.batch_size; ++i) {
            int row = static_cast<int>(rng.below(static_cast<uint64_t>(data.rows)));
            for (int j = 0; j < data.cols; ++j) {
                bq.at(i, j) = data.at(row, j) + sigma * rng.normal();
                br.at(i, j) = sqrt_tau * rng.normal();
            }
        }
        auto [loss, grads] = logistic_loss(model, bq, br);
        trace.loss.push_back(loss);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_ratio: diverged at iteration " + std::to_string(it));
        adam_update(adam, params, detail::grad_spans(grads));
    }
    return {std::move(model), std::move(trace)};
}

inline double log_ratio_estimate(const RatioModel& model, const std::vector<double>& x) {
    double r = mlp_forward(model.net, x)[0];
    return std::clamp(r, -model.logit_clamp, model.logit_clamp);
}

/// f_hat(x) = exp of the clamped logit; strictly positive and finite.
inline double ratio_estimate(const RatioModel& model, const std::vector<double>& x) {
    return std::exp(log_ratio_estimate(model, x));
}

/// Batched f_hat over rows.
inline std::vector<double> ratio_estimate_batch(const RatioModel& model, const Matrix& x) {
    Matrix none;
    Matrix r = mlp_forward_batch(model.net, x, none);
    std::vector<double> out(x.rows);
    for (int i = 0; i < x.rows; ++i)
        out[i] = std::exp(std::clamp(r.at(i, 0), -model.logit_clamp, model.logit_clamp));
    return out;
}

inline void save_ratio_model(const std::string& path, RatioModel& model) {
    CheckpointMeta meta;
    meta.kind = 2;
    meta.meta[0] = model.sigma;
    meta.meta[1] = model.tau;
    meta.meta[2] = model.logit_clamp;
    save_network_file(path, model.net, meta);
}

inline RatioModel load_ratio_model(const std::string& path) {
    CheckpointMeta meta;
    RatioModel model;
    model.net = load_network_file(path, &meta);
    if (meta.kind != 2) throw std::runtime_error("checkpoint is not a ratio model: " + path);
    model.sigma = meta.meta[0];
    model.tau = meta.meta[1];
    model.logit_clamp = meta.meta[2];
    return model;
}

} // namespace sb
