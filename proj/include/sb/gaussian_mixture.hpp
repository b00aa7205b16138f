// Isotropic Gaussian-mixture algebra: sampling, smoothed log-densities and
// scores, the exact smoothed-target/reference density ratio, and closed-form
// stage-1/stage-2 bridge drifts. Everything here is exact, which makes the
// mixture family usable both as experiment target and as test oracle.

#pragma once

#include "sb/matrix.hpp"
#include "sb/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sb {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

struct GaussianMixture {
    int d = 0;
    std::vector<double> weights;
    std::vector<std::vector<double>> means;
    std::vector<double> variances;  // isotropic: variance * I per component

    int num_components() const { return static_cast<int>(weights.size()); }

    void validate() const {
        if (d < 1 || weights.empty()) throw std::invalid_argument("mixture: empty");
        if (means.size() != weights.size() || variances.size() != weights.size())
            throw std::invalid_argument("mixture: component list length mismatch");
        double wsum = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw std::invalid_argument("mixture: negative weight");
            wsum += w;
        }
        if (std::abs(wsum - 1.0) > 1e-12) throw std::invalid_argument("mixture: weights must sum to 1");
        for (double v : variances)
            if (!(v > 0.0)) throw std::invalid_argument("mixture: variances must be positive");
        for (const auto& m : means)
            if (static_cast<int>(m.size()) != d) throw std::invalid_argument("mixture: mean dimension mismatch");
    }
};

struct IsotropicGaussian {
    int d = 0;
    double variance = 1.0;
};

inline double iso_log_pdf(const IsotropicGaussian& g, const std::vector<double>& x) {
    double sq = 0.0;
    for (double v : x) sq += v * v;
    return -0.5 * g.d * std::log(kTwoPi * g.variance) - sq / (2.0 * g.variance);
}

inline Matrix gmm_sample(const GaussianMixture& g, int n, Rng& rng) {
    if (n < 0) throw std::invalid_argument("gmm_sample: n must be >= 0");
    Matrix out(n, g.d);
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        double acc = 0.0;
        int c = g.num_components() - 1;
        for (int j = 0; j < g.num_components(); ++j) {
            acc += g.weights[j];
            if (u <= acc) { c = j; break; }
        }
        double sd = std::sqrt(g.variances[c]);
        for (int j = 0; j < g.d; ++j)
            out.at(i, j) = g.means[c][j] + sd * rng.normal();
    }
    return out;
}

/// Convolution with an isotropic Gaussian of std s: variances add.
inline GaussianMixture gmm_smooth(const GaussianMixture& g, double s) {
    if (s < 0.0) throw std::invalid_argument("gmm_smooth: s must be >= 0");
    GaussianMixture out = g;
    for (auto& v : out.variances) v += s * s;
    return out;
}

namespace detail {
inline std::vector<double> gmm_component_logs(const GaussianMixture& g, const std::vector<double>& x) {
    std::vector<double> logs(g.num_components());
    for (int c = 0; c < g.num_components(); ++c) {
        double sq = 0.0;
        for (int j = 0; j < g.d; ++j) {
            double r = x[j] - g.means[c][j];
            sq += r * r;
        }
        logs[c] = std::log(g.weights[c] > 0 ? g.weights[c] : std::numeric_limits<double>::min()) -
                  0.5 * g.d * std::log(kTwoPi * g.variances[c]) - sq / (2.0 * g.variances[c]);
    }
    return logs;
}

inline double logsumexp(const std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}
} // namespace detail

inline double gmm_log_pdf(const GaussianMixture& g, const std::vector<double>& x) {
    return detail::logsumexp(detail::gmm_component_logs(g, x));
}

inline std::vector<double> gmm_score(const GaussianMixture& g, const std::vector<double>& x) {
    auto logs = detail::gmm_component_logs(g, x);
    double lse = detail::logsumexp(logs);
    std::vector<double> score(g.d, 0.0);
    for (int c = 0; c < g.num_components(); ++c) {
        double r = std::exp(logs[c] - lse);  // responsibility
        for (int j = 0; j < g.d; ++j)
            score[j] += r * (g.means[c][j] - x[j]) / g.variances[c];
    }
    return score;
}

/// Exact density ratio f(x) = q_sigma(x) / N(x; 0, tau I).
inline double density_ratio_exact(const GaussianMixture& g, double sigma, double tau,
                                  const std::vector<double>& x) {
    if (!(tau > 0.0)) throw std::invalid_argument("density_ratio_exact: tau must be > 0");
    double lq = gmm_log_pdf(gmm_smooth(g, sigma), x);
    double lref = iso_log_pdf({g.d, tau}, x);
    return std::exp(lq - lref);
}

inline double log_density_ratio_exact(const GaussianMixture& g, double sigma, double tau,
                                      const std::vector<double>& x) {
    if (!(tau > 0.0)) throw std::invalid_argument("density_ratio_exact: tau must be > 0");
    return gmm_log_pdf(gmm_smooth(g, sigma), x) - iso_log_pdf({g.d, tau}, x);
}

/// Stage-2 drift D2(t, x) = grad log q_{sqrt(1-t) sigma}(x).
inline std::vector<double> drift_stage2_exact(const GaussianMixture& g, double sigma, double t,
                                              const std::vector<double>& x) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("drift_stage2_exact: t must be in [0,1]");
    return gmm_score(gmm_smooth(g, std::sqrt(1.0 - t) * sigma), x);
}

/// Stage-1 drift D1(t, x) = grad log E_{z ~ N(0, tau I)}[ f(x + sqrt(1-t) z) ].
///
/// With q_sigma a mixture of N(mu_i, S_i I), S_i = v_i + sigma^2, the
/// expectation is a Gaussian integral with per-component precision
/// alpha_i = 1/A + 1/S_i - 1/tau, A = (1-t) tau, and evaluates to
///   sum_i w_i (tau / (A S_i alpha_i))^{d/2}
///         exp(|beta_i|^2/(2 alpha_i) - |x|^2/(2A) - |mu_i|^2/(2 S_i)),
/// beta_i = x/A + mu_i/S_i. The gradient follows by differentiating the
/// component logs and weighting by responsibilities.
inline std::vector<double> drift_stage1_exact(const GaussianMixture& g, double sigma, double tau,
                                              double t, const std::vector<double>& x) {
    if (!(tau > 0.0)) throw std::invalid_argument("drift_stage1_exact: tau must be > 0");
    if (t < 0.0 || t >= 1.0)
        throw std::invalid_argument("drift_stage1_exact: t must be in [0,1)");
    const int d = g.d;
    const int K = g.num_components();
    const double A = (1.0 - t) * tau;
    std::vector<double> logs(K);
    std::vector<std::vector<double>> comp_grad(K, std::vector<double>(d));
    double xsq = 0.0;
    for (double v : x) xsq += v * v;
    for (int c = 0; c < K; ++c) {
        const double S = g.variances[c] + sigma * sigma;
        const double alpha = 1.0 / A + 1.0 / S - 1.0 / tau;
        double bsq = 0.0, msq = 0.0;
        for (int j = 0; j < d; ++j) {
            double beta = x[j] / A + g.means[c][j] / S;
            bsq += beta * beta;
            msq += g.means[c][j] * g.means[c][j];
            comp_grad[c][j] = beta / (alpha * A) - x[j] / A;
        }
        logs[c] = std::log(g.weights[c] > 0 ? g.weights[c] : std::numeric_limits<double>::min()) +
                  0.5 * d * std::log(tau / (A * S * alpha)) +
                  bsq / (2.0 * alpha) - xsq / (2.0 * A) - msq / (2.0 * S);
    }
    double lse = detail::logsumexp(logs);
    std::vector<double> grad(d, 0.0);
    for (int c = 0; c < K; ++c) {
        double r = std::exp(logs[c] - lse);
        for (int j = 0; j < d; ++j) grad[j] += r * comp_grad[c][j];
    }
    return grad;
}

/// Brownian transition density h_tau(s, x, t, y).
inline double heat_kernel(double tau, double s, const std::vector<double>& x, double t,
                          const std::vector<double>& y) {
    if (!(t > s)) throw std::invalid_argument("heat_kernel: requires t > s");
    if (x.size() != y.size()) throw std::invalid_argument("heat_kernel: dimension mismatch");
    const double v = tau * (t - s);
    double sq = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        double r = x[j] - y[j];
        sq += r * r;
    }
    return std::pow(kTwoPi * v, -0.5 * static_cast<double>(x.size())) * std::exp(-sq / (2.0 * v));
}

// ---------------------------------------------------------------------------
// Presets and the key-value mixture file format.
// ---------------------------------------------------------------------------

/// Six equal-weight modes at radius 5 and angles k*60 deg, variance 0.01.
inline GaussianMixture six_modes_mixture() {
    GaussianMixture g;
    g.d = 2;
    for (int k = 0; k < 6; ++k) {
        double a = kTwoPi * k / 6.0;
        g.weights.push_back(1.0 / 6.0);
        g.means.push_back({5.0 * std::cos(a), 5.0 * std::sin(a)});
        g.variances.push_back(0.01);
    }
    g.validate();
    return g;
}

inline GaussianMixture gauss1d_mixture() {
    GaussianMixture g;
    g.d = 1;
    g.weights = {1.0};
    g.means = {{0.0}};
    g.variances = {1.0};
    return g;
}

/// Target N(0, (tau - sigma^2) I), for which f = q_sigma / Phi_sqrt(tau) == 1.
inline GaussianMixture matched_variance_mixture(double sigma, double tau, int d = 2) {
    if (!(tau > sigma * sigma)) throw std::invalid_argument("matched_variance: requires tau > sigma^2");
    GaussianMixture g;
    g.d = d;
    g.weights = {1.0};
    g.means = {std::vector<double>(d, 0.0)};
    g.variances = {tau - sigma * sigma};
    return g;
}

inline GaussianMixture mixture_preset(const std::string& name, double sigma = 1.0, double tau = 5.0) {
    if (name == "six-modes") return six_modes_mixture();
    if (name == "gauss-1d") return gauss1d_mixture();
    if (name == "matched-variance") return matched_variance_mixture(sigma, tau);
    throw std::invalid_argument("unknown mixture preset: " + name);
}

inline void save_mixture(std::ostream& os, const GaussianMixture& g) {
    os.precision(17);
    os << "d = " << g.d << "\n";
    os << "components = " << g.num_components() << "\n";
    for (int c = 0; c < g.num_components(); ++c) {
        os << "weight_" << c << " = " << g.weights[c] << "\n";
        os << "mean_" << c << " =";
        for (double v : g.means[c]) os << " " << v;
        os << "\n";
        os << "variance_" << c << " = " << g.variances[c] << "\n";
    }
}

inline GaussianMixture load_mixture(std::istream& is) {
    GaussianMixture g;
    int ncomp = -1;
    std::string line;
    auto parse = [&](const std::string& l, std::string& key, std::string& val) {
        auto eq = l.find('=');
        if (eq == std::string::npos) return false;
        key = l.substr(0, eq);
        val = l.substr(eq + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t"));
            auto e = s.find_last_not_of(" \t\r");
            s.erase(e == std::string::npos ? 0 : e + 1);
        };
        trim(key);
        trim(val);
        return true;
    };
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::string key, val;
        if (!parse(line, key, val)) continue;
        if (key == "d") g.d = std::stoi(val);
        else if (key == "components") {
            ncomp = std::stoi(val);
            g.weights.resize(ncomp);
            g.means.assign(ncomp, std::vector<double>(g.d, 0.0));
            g.variances.resize(ncomp);
        } else if (key.rfind("weight_", 0) == 0) {
            g.weights.at(std::stoul(key.substr(7))) = std::stod(val);
        } else if (key.rfind("mean_", 0) == 0) {
            std::istringstream ss(val);
            auto& m = g.means.at(std::stoul(key.substr(5)));
            for (auto& v : m) ss >> v;
            if (!ss) throw std::runtime_error("mixture file: malformed mean: " + line);
        } else if (key.rfind("variance_", 0) == 0) {
            g.variances.at(std::stoul(key.substr(9))) = std::stod(val);
        }
    }
    g.validate();
    return g;
}

inline void save_mixture_file(const std::string& path, const GaussianMixture& g) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write mixture file: " + path);
    save_mixture(os, g);
}

inline GaussianMixture load_mixture_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open mixture file: " + path);
    return load_mixture(is);
}

} // namespace sb
