// Bias-corrected Adam with L2 weight decay folded into the gradient.

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace sb {

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    long step = 0;
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamState(std::size_t num_params = 0)
        : m(num_params, 0.0), v(num_params, 0.0) {}
};

/// One Adam step over a parameter set presented as a list of spans. The
/// gradient spans must pair 1:1 with the parameter spans; the flat moment
/// buffers follow the same order, so the update is invariant to how the
/// parameters are grouped.
inline void adam_update(AdamState& state, const std::vector<std::span<double>>& params,
                        const std::vector<std::span<const double>>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_update: span count mismatch");
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size())
            throw std::invalid_argument("adam_update: span size mismatch");
        total += params[i].size();
    }
    if (state.m.size() != total)
        throw std::invalid_argument("adam_update: state size mismatch");
    for (const auto& g : grads)
        for (double v : g)
            if (!std::isfinite(v)) throw std::runtime_error("adam_update: non-finite gradient");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    std::size_t off = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i];
        auto g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            double grad = g[j] + state.weight_decay * p[j];
            double& m = state.m[off + j];
            double& v = state.v[off + j];
            m = state.beta1 * m + (1.0 - state.beta1) * grad;
            v = state.beta2 * v + (1.0 - state.beta2) * grad * grad;
            p[j] -= state.lr * (m / bc1) / (std::sqrt(v / bc2) + state.eps);
        }
        off += p.size();
    }
}

} // namespace sb
