// File formats and experiment configuration: CSV sample tables, the SBPT
// binary particle container, the key-value experiment config, Gaussian KDE
// grids with PPM heatmap export, and data centering.

#pragma once

#include "sb/bridge.hpp"
#include "sb/evaluation.hpp"
#include "sb/matrix.hpp"
#include "sb/score_model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sb {

// ---------------------------------------------------------------------------
// CSV samples: header "x0,x1,...", one row per particle.
// ---------------------------------------------------------------------------

inline void save_samples_csv(std::ostream& os, const Matrix& m) {
    os.precision(17);
    for (int j = 0; j < m.cols; ++j) os << (j ? "," : "") << "x" << j;
    os << "\n";
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) os << (j ? "," : "") << m.at(i, j);
        os << "\n";
    }
}

inline Matrix load_samples_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("csv: empty file");
    int cols = 1;
    for (char c : line) cols += c == ',';
    std::vector<double> data;
    int rows = 0;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        int got = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                data.push_back(std::stod(cell));
            } catch (...) {
                throw std::runtime_error("csv: malformed value at line " + std::to_string(lineno));
            }
            ++got;
        }
        if (got != cols)
            throw std::runtime_error("csv: wrong column count at line " + std::to_string(lineno));
        ++rows;
    }
    Matrix m(rows, cols);
    m.data = std::move(data);
    return m;
}

inline void save_samples_csv_file(const std::string& path, const Matrix& m) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    save_samples_csv(os, m);
}

inline Matrix load_samples_csv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return load_samples_csv(is);
}

// ---------------------------------------------------------------------------
// SBPT binary: 16-byte header (magic "SBPT", n u32, d u32, 4 pad bytes),
// then n*d little-endian f64 row-major.
// ---------------------------------------------------------------------------

inline void save_samples_binary(std::ostream& os, const Matrix& m) {
    os.write("SBPT", 4);
    uint32_t n = static_cast<uint32_t>(m.rows), d = static_cast<uint32_t>(m.cols), pad = 0;
    os.write(reinterpret_cast<const char*>(&n), 4);
    os.write(reinterpret_cast<const char*>(&d), 4);
    os.write(reinterpret_cast<const char*>(&pad), 4);
    os.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.size() * 8));
}

inline Matrix load_samples_binary(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SBPT", 4) != 0) throw std::runtime_error("sbpt: bad magic");
    uint32_t n = 0, d = 0, pad = 0;
    is.read(reinterpret_cast<char*>(&n), 4);
    is.read(reinterpret_cast<char*>(&d), 4);
    is.read(reinterpret_cast<char*>(&pad), 4);
    Matrix m(static_cast<int>(n), static_cast<int>(d));
    is.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.size() * 8));
    if (!is) throw std::runtime_error("sbpt: truncated file");
    return m;
}

inline void save_samples_binary_file(const std::string& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write: " + path);
    save_samples_binary(os, m);
}

inline Matrix load_samples_binary_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    return load_samples_binary(is);
}

// ---------------------------------------------------------------------------
// Centering.
// ---------------------------------------------------------------------------

struct CenteredData {
    Matrix data;
    std::vector<double> mean;
};

inline CenteredData center_data(const Matrix& data) {
    if (data.rows == 0) throw std::invalid_argument("center_data: empty data");
    CenteredData out;
    out.mean.assign(data.cols, 0.0);
    for (int i = 0; i < data.rows; ++i)
        for (int j = 0; j < data.cols; ++j) out.mean[j] += data.at(i, j);
    for (auto& v : out.mean) v /= data.rows;
    out.data = data;
    for (int i = 0; i < data.rows; ++i)
        for (int j = 0; j < data.cols; ++j) out.data.at(i, j) -= out.mean[j];
    return out;
}

inline void uncenter_inplace(Matrix& data, const std::vector<double>& mean) {
    for (int i = 0; i < data.rows; ++i)
        for (int j = 0; j < data.cols; ++j) data.at(i, j) += mean[j];
}

// ---------------------------------------------------------------------------
// Experiment configuration: flat key = value text with [sections].
// ---------------------------------------------------------------------------

struct NetConfig {
    TrainConfig train;
    std::vector<int> hidden = {256, 512};
    int embed_dim = 64;  // ignored by the ratio net
};

struct ExperimentConfig {
    std::string preset = "six-modes";  // or empty with mixture_file set
    std::string mixture_file;
    double sigma = 1.0;
    double tau = 5.0;
    uint64_t seed = 1;
    std::string out_dir = "out";
    NetConfig score;
    NetConfig ratio;
    BridgeConfig bridge;

    ExperimentConfig() {
        score.train.lr = 1e-4;
        score.train.weight_decay = 0.0;
        ratio.train.lr = 1e-3;
        ratio.train.weight_decay = 0.1;
        ratio.hidden = {256, 512};
    }

    GaussianMixture target() const {
        if (!mixture_file.empty()) return load_mixture_file(mixture_file);
        return mixture_preset(preset, sigma, tau);
    }

    bool operator==(const ExperimentConfig& o) const {
        auto net_eq = [](const NetConfig& a, const NetConfig& b) {
            return a.hidden == b.hidden && a.embed_dim == b.embed_dim &&
                   a.train.batch_size == b.train.batch_size && a.train.iterations == b.train.iterations &&
                   a.train.lr == b.train.lr && a.train.beta1 == b.train.beta1 &&
                   a.train.beta2 == b.train.beta2 && a.train.eps == b.train.eps &&
                   a.train.weight_decay == b.train.weight_decay &&
                   a.train.sigma_floor_frac == b.train.sigma_floor_frac && a.train.seed == b.train.seed;
        };
        return preset == o.preset && mixture_file == o.mixture_file && sigma == o.sigma &&
               tau == o.tau && seed == o.seed && out_dir == o.out_dir && net_eq(score, o.score) &&
               net_eq(ratio, o.ratio) && bridge.sigma == o.bridge.sigma && bridge.tau == o.bridge.tau &&
               bridge.n1 == o.bridge.n1 && bridge.n2 == o.bridge.n2 && bridge.n3 == o.bridge.n3 &&
               bridge.seed == o.bridge.seed && bridge.final_denoise == o.bridge.final_denoise;
    }
};

namespace detail {
inline std::string dims_to_string(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}
inline std::vector<int> dims_from_string(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stoi(cell));
    return out;
}
} // namespace detail

inline void serialize_config(std::ostream& os, const ExperimentConfig& c) {
    os.precision(17);
    os << "[experiment]\n";
    os << "preset = " << c.preset << "\n";
    os << "mixture_file = " << c.mixture_file << "\n";
    os << "sigma = " << c.sigma << "\n";
    os << "tau = " << c.tau << "\n";
    os << "seed = " << c.seed << "\n";
    os << "out_dir = " << c.out_dir << "\n";
    auto net = [&](const char* name, const NetConfig& n, bool embed) {
        os << "[" << name << "]\n";
        os << "hidden = " << detail::dims_to_string(n.hidden) << "\n";
        if (embed) os << "embed_dim = " << n.embed_dim << "\n";
        os << "batch_size = " << n.train.batch_size << "\n";
        os << "iterations = " << n.train.iterations << "\n";
        os << "lr = " << n.train.lr << "\n";
        os << "beta1 = " << n.train.beta1 << "\n";
        os << "beta2 = " << n.train.beta2 << "\n";
        os << "eps = " << n.train.eps << "\n";
        os << "weight_decay = " << n.train.weight_decay << "\n";
        os << "sigma_floor_frac = " << n.train.sigma_floor_frac << "\n";
        os << "seed = " << n.train.seed << "\n";
    };
    net("score", c.score, true);
    net("ratio", c.ratio, false);
    os << "[bridge]\n";
    os << "n1 = " << c.bridge.n1 << "\n";
    os << "n2 = " << c.bridge.n2 << "\n";
    os << "n3 = " << c.bridge.n3 << "\n";
    os << "final_denoise = " << (c.bridge.final_denoise ? 1 : 0) << "\n";
    os << "seed = " << c.bridge.seed << "\n";
}

inline ExperimentConfig parse_config(std::istream& is) {
    ExperimentConfig c;
    std::string section = "experiment";
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config: bad section at line " + std::to_string(lineno));
            section = line.substr(1, line.size() - 2);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: expected key = value at line " + std::to_string(lineno));
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t"));
            auto e = s.find_last_not_of(" \t");
            s.erase(e == std::string::npos ? 0 : e + 1);
        };
        trim(key);
        trim(val);
        try {
            if (section == "experiment") {
                if (key == "preset") c.preset = val;
                else if (key == "mixture_file") c.mixture_file = val;
                else if (key == "sigma") c.sigma = std::stod(val);
                else if (key == "tau") c.tau = std::stod(val);
                else if (key == "seed") c.seed = std::stoull(val);
                else if (key == "out_dir") c.out_dir = val;
                else throw std::runtime_error("unknown key");
            } else if (section == "score" || section == "ratio") {
                NetConfig& n = section == "score" ? c.score : c.ratio;
                if (key == "hidden") n.hidden = detail::dims_from_string(val);
                else if (key == "embed_dim") n.embed_dim = std::stoi(val);
                else if (key == "batch_size") n.train.batch_size = std::stoi(val);
                else if (key == "iterations") n.train.iterations = std::stoi(val);
                else if (key == "lr") n.train.lr = std::stod(val);
                else if (key == "beta1") n.train.beta1 = std::stod(val);
                else if (key == "beta2") n.train.beta2 = std::stod(val);
                else if (key == "eps") n.train.eps = std::stod(val);
                else if (key == "weight_decay") n.train.weight_decay = std::stod(val);
                else if (key == "sigma_floor_frac") n.train.sigma_floor_frac = std::stod(val);
                else if (key == "seed") n.train.seed = std::stoull(val);
                else throw std::runtime_error("unknown key");
            } else if (section == "bridge") {
                if (key == "n1") c.bridge.n1 = std::stoi(val);
                else if (key == "n2") c.bridge.n2 = std::stoi(val);
                else if (key == "n3") c.bridge.n3 = std::stoi(val);
                else if (key == "final_denoise") c.bridge.final_denoise = std::stoi(val) != 0;
                else if (key == "seed") c.bridge.seed = std::stoull(val);
                else throw std::runtime_error("unknown key");
            } else {
                throw std::runtime_error("unknown section");
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("config: " + std::string(e.what()) + " at line " +
                                     std::to_string(lineno) + " (" + key + ")");
        }
    }
    c.bridge.sigma = c.sigma;
    c.bridge.tau = c.tau;
    return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    return parse_config(is);
}

// ---------------------------------------------------------------------------
// Gaussian KDE on a grid, with PPM (P6) heatmap export.
// ---------------------------------------------------------------------------

struct KdeGrid {
    GridSpec spec;
    std::vector<double> density;  // row-major ny x nx
    double bandwidth_x = 0.0, bandwidth_y = 0.0;
};

/// Product-kernel Gaussian KDE for 2D samples; bandwidth 0 selects Scott's
/// rule per axis.
inline KdeGrid kde2d(const Matrix& samples, const GridSpec& spec, double bandwidth = 0.0) {
    if (samples.cols != 2) throw std::invalid_argument("kde2d: expects 2D samples");
    if (samples.rows < 2) throw std::invalid_argument("kde2d: needs at least 2 samples");
    const int n = samples.rows;
    double hx = bandwidth, hy = bandwidth;
    if (bandwidth <= 0.0) {
        double mx = 0, my = 0, vx = 0, vy = 0;
        for (int i = 0; i < n; ++i) {
            mx += samples.at(i, 0);
            my += samples.at(i, 1);
        }
        mx /= n;
        my /= n;
        for (int i = 0; i < n; ++i) {
            vx += (samples.at(i, 0) - mx) * (samples.at(i, 0) - mx);
            vy += (samples.at(i, 1) - my) * (samples.at(i, 1) - my);
        }
        double scott = std::pow(static_cast<double>(n), -1.0 / 6.0);  // d = 2
        hx = std::sqrt(vx / (n - 1)) * scott;
        hy = std::sqrt(vy / (n - 1)) * scott;
    }
    KdeGrid grid;
    grid.spec = spec;
    grid.bandwidth_x = hx;
    grid.bandwidth_y = hy;
    grid.density.assign(static_cast<std::size_t>(spec.nx) * spec.ny, 0.0);
    const double norm = 1.0 / (n * kTwoPi * hx * hy);
    for (int iy = 0; iy < spec.ny; ++iy) {
        double y = spec.ymin + (spec.ymax - spec.ymin) * iy / (spec.ny - 1);
        for (int ix = 0; ix < spec.nx; ++ix) {
            double x = spec.xmin + (spec.xmax - spec.xmin) * ix / (spec.nx - 1);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                double dx = (x - samples.at(i, 0)) / hx;
                double dy = (y - samples.at(i, 1)) / hy;
                acc += std::exp(-0.5 * (dx * dx + dy * dy));
            }
            grid.density[static_cast<std::size_t>(iy) * spec.nx + ix] = acc * norm;
        }
    }
    return grid;
}

inline void save_kde_csv(std::ostream& os, const KdeGrid& g) {
    os.precision(17);
    os << "x,y,density\n";
    for (int iy = 0; iy < g.spec.ny; ++iy) {
        double y = g.spec.ymin + (g.spec.ymax - g.spec.ymin) * iy / (g.spec.ny - 1);
        for (int ix = 0; ix < g.spec.nx; ++ix) {
            double x = g.spec.xmin + (g.spec.xmax - g.spec.xmin) * ix / (g.spec.nx - 1);
            os << x << "," << y << "," << g.density[static_cast<std::size_t>(iy) * g.spec.nx + ix] << "\n";
        }
    }
}

/// P6 heatmap, dark-to-warm ramp, rows top-to-bottom (ymax first).
inline void save_kde_ppm(std::ostream& os, const KdeGrid& g) {
    double mx = 0.0;
    for (double v : g.density) mx = std::max(mx, v);
    if (mx <= 0.0) mx = 1.0;
    os << "P6\n" << g.spec.nx << " " << g.spec.ny << "\n255\n";
    for (int iy = g.spec.ny - 1; iy >= 0; --iy) {
        for (int ix = 0; ix < g.spec.nx; ++ix) {
            double t = g.density[static_cast<std::size_t>(iy) * g.spec.nx + ix] / mx;
            unsigned char r = static_cast<unsigned char>(255.0 * std::min(1.0, 3.0 * t));
            unsigned char gch = static_cast<unsigned char>(255.0 * std::clamp(3.0 * t - 1.0, 0.0, 1.0));
            unsigned char b = static_cast<unsigned char>(255.0 * std::clamp(3.0 * t - 2.0, 0.0, 1.0));
            os.put(static_cast<char>(r));
            os.put(static_cast<char>(gch));
            os.put(static_cast<char>(b));
        }
    }
}

inline void save_field_csv(std::ostream& os, const FieldGrid& g) {
    os.precision(17);
    os << "x,y,u,v\n";
    for (std::size_t i = 0; i < g.x.size(); ++i)
        os << g.x[i] << "," << g.y[i] << "," << g.u[i] << "," << g.v[i] << "\n";
}

} // namespace sb
