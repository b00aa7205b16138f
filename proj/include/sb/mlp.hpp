// Dense fully connected network with an optional conditioning embedding that
// is projected and added to every hidden pre-activation, plus exact
// reverse-mode gradients. Hidden activation is the rectifier; the final
// layer is affine.

#pragma once

#include "sb/matrix.hpp"
#include "sb/rng.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sb {

struct MlpNetwork {
    std::vector<int> layer_dims;          // input, hidden..., output
    int embed_dim = 0;                    // 0 means no conditioning input
    std::vector<Matrix> weights;          // per layer, shape out x in
    std::vector<std::vector<double>> biases;
    std::vector<Matrix> embed_projections; // per hidden layer, shape width x embed_dim

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
    int num_hidden() const { return num_layers() - 1; }
    bool has_embedding() const { return embed_dim > 0; }

    /// Fixed traversal order of all parameter buffers:
    /// per layer weights, biases, then the embed projection if present.
    template <class Fn>
    void for_each_param(Fn&& fn) {
        for (int l = 0; l < num_layers(); ++l) {
            fn(std::span<double>(weights[l].data));
            fn(std::span<double>(biases[l]));
            if (has_embedding() && l < num_hidden())
                fn(std::span<double>(embed_projections[l].data));
        }
    }

    std::size_t num_params() const {
        std::size_t n = 0;
        for (int l = 0; l < num_layers(); ++l) {
            n += weights[l].size() + biases[l].size();
            if (has_embedding() && l < num_hidden()) n += embed_projections[l].size();
        }
        return n;
    }
};

/// Gradients mirroring the parameter layout of an MlpNetwork, plus the
/// gradient with respect to the inputs.
struct MlpGrads {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    std::vector<Matrix> embed_projections;
    Matrix input;  // n x input_dim
    Matrix embed;  // n x embed_dim (empty when the net has no embedding)

    template <class Fn>
    void for_each_param(Fn&& fn) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            fn(std::span<double>(weights[l].data));
            fn(std::span<double>(biases[l]));
            if (l < embed_projections.size()) fn(std::span<double>(embed_projections[l].data));
        }
    }
};

inline MlpNetwork mlp_init(const std::vector<int>& layer_dims, int embed_dim, Rng& rng) {
    if (layer_dims.size() < 2) throw std::invalid_argument("mlp_init: need at least input and output dims");
    MlpNetwork net;
    net.layer_dims = layer_dims;
    net.embed_dim = embed_dim;
    const int L = net.num_layers();
    for (int l = 0; l < L; ++l) {
        int in = layer_dims[l], out = layer_dims[l + 1];
        Matrix w(out, in);
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& v : w.data) v = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        std::vector<double> b(out);
        for (auto& v : b) v = rng.uniform(-bound, bound);
        net.biases.push_back(std::move(b));
        if (embed_dim > 0 && l < L - 1) {
            Matrix e(out, embed_dim);
            double eb = 1.0 / std::sqrt(static_cast<double>(embed_dim));
            for (auto& v : e.data) v = rng.uniform(-eb, eb);
            net.embed_projections.push_back(std::move(e));
        }
    }
    return net;
}

/// Cached intermediate activations from a batched forward pass.
struct MlpTrace {
    std::vector<Matrix> pre;  // pre-activation per layer (n x width)
    std::vector<Matrix> act;  // act[0] = input, act[l+1] = layer l output
};

/// Batched forward. x is n x input_dim; embed is n x embed_dim or empty.
inline Matrix mlp_forward_batch(const MlpNetwork& net, const Matrix& x, const Matrix& embed,
                                MlpTrace* trace = nullptr) {
    if (x.cols != net.input_dim()) throw std::invalid_argument("mlp_forward: input dim mismatch");
    if (net.has_embedding()) {
        if (embed.rows != x.rows || embed.cols != net.embed_dim)
            throw std::invalid_argument("mlp_forward: embedding shape mismatch");
    } else if (embed.size() != 0) {
        throw std::invalid_argument("mlp_forward: net has no embedding input");
    }
    const int L = net.num_layers();
    Matrix h = x;
    if (trace) {
        trace->pre.clear();
        trace->act.clear();
        trace->act.push_back(x);
    }
    for (int l = 0; l < L; ++l) {
        Matrix z = matmul_nt(h, net.weights[l]);
        const auto& b = net.biases[l];
        for (int i = 0; i < z.rows; ++i) {
            double* zi = z.row(i);
            for (int j = 0; j < z.cols; ++j) zi[j] += b[j];
        }
        const bool hidden = l < L - 1;
        if (hidden && net.has_embedding()) {
            Matrix e = matmul_nt(embed, net.embed_projections[l]);
            for (std::size_t i = 0; i < z.size(); ++i) z.data[i] += e.data[i];
        }
        if (trace) trace->pre.push_back(z);
        if (hidden)
            for (auto& v : z.data) v = v > 0.0 ? v : 0.0;
        h = std::move(z);
        if (trace) trace->act.push_back(h);
    }
    return h;
}

/// Batched reverse mode: gradients of sum_i <upstream.row(i), out.row(i)>
/// with respect to every parameter, the inputs, and the embedding.
inline MlpGrads mlp_backward_batch(const MlpNetwork& net, const MlpTrace& trace,
                                   const Matrix& embed, const Matrix& upstream) {
    const int L = net.num_layers();
    if (upstream.cols != net.output_dim() || upstream.rows != trace.act[0].rows)
        throw std::invalid_argument("mlp_backward: upstream shape mismatch");
    MlpGrads g;
    g.weights.resize(L);
    g.biases.resize(L);
    if (net.has_embedding()) {
        g.embed_projections.resize(net.num_hidden());
        g.embed = Matrix(upstream.rows, net.embed_dim);
    }
    Matrix dz = upstream;
    for (int l = L - 1; l >= 0; --l) {
        if (l < L - 1) {
            const Matrix& pre = trace.pre[l];
            for (std::size_t i = 0; i < dz.size(); ++i)
                if (pre.data[i] <= 0.0) dz.data[i] = 0.0;
        }
        g.weights[l] = matmul_tn(dz, trace.act[l]);
        g.biases[l].assign(net.biases[l].size(), 0.0);
        for (int i = 0; i < dz.rows; ++i) {
            const double* di = dz.row(i);
            for (int j = 0; j < dz.cols; ++j) g.biases[l][j] += di[j];
        }
        if (net.has_embedding() && l < L - 1) {
            g.embed_projections[l] = matmul_tn(dz, embed);
            Matrix de = matmul(dz, net.embed_projections[l]);
            for (std::size_t i = 0; i < de.size(); ++i) g.embed.data[i] += de.data[i];
        }
        Matrix next = matmul(dz, net.weights[l]);
        if (l == 0) g.input = std::move(next);
        else dz = std::move(next);
    }
    return g;
}

/// Single-vector forward.
inline std::vector<double> mlp_forward(const MlpNetwork& net, const std::vector<double>& x,
                                       const std::vector<double>& embed = {}) {
    Matrix xm(1, static_cast<int>(x.size()));
    xm.set_row(0, x);
    Matrix em;
    if (!embed.empty()) {
        em = Matrix(1, static_cast<int>(embed.size()));
        em.set_row(0, embed);
    }
    return mlp_forward_batch(net, xm, em).row_vec(0);
}

/// Single-vector reverse mode: gradients of <upstream, mlp_forward(net, x, embed)>.
inline MlpGrads mlp_backward(const MlpNetwork& net, const std::vector<double>& x,
                             const std::vector<double>& embed,
                             const std::vector<double>& upstream) {
    Matrix xm(1, static_cast<int>(x.size()));
    xm.set_row(0, x);
    Matrix em;
    if (!embed.empty()) {
        em = Matrix(1, static_cast<int>(embed.size()));
        em.set_row(0, embed);
    }
    MlpTrace trace;
    mlp_forward_batch(net, xm, em, &trace);
    Matrix up(1, static_cast<int>(upstream.size()));
    up.set_row(0, upstream);
    return mlp_backward_batch(net, trace, em, up);
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic "SBNN", version, kind, layer dims, embed dim,
// four f64 metadata slots, then all parameter matrices as little-endian f64
// row-major ordered weights/biases/embed_projections per layer.
// ---------------------------------------------------------------------------

struct CheckpointMeta {
    uint32_t kind = 0;  // 0 plain network, 1 score model, 2 ratio model
    double meta[4] = {0, 0, 0, 0};
};

namespace detail {
inline void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline void write_f64s(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
}
inline void read_f64s(std::istream& is, double* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8));
}
} // namespace detail

inline void save_network(std::ostream& os, MlpNetwork& net, const CheckpointMeta& meta) {
    os.write("SBNN", 4);
    detail::write_u32(os, 1u);
    detail::write_u32(os, meta.kind);
    detail::write_u32(os, static_cast<uint32_t>(net.layer_dims.size()));
    for (int d : net.layer_dims) detail::write_u32(os, static_cast<uint32_t>(d));
    detail::write_u32(os, static_cast<uint32_t>(net.embed_dim));
    detail::write_f64s(os, meta.meta, 4);
    net.for_each_param([&](std::span<double> p) { detail::write_f64s(os, p.data(), p.size()); });
}

inline MlpNetwork load_network(std::istream& is, CheckpointMeta* meta_out = nullptr) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SBNN", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    uint32_t version = detail::read_u32(is);
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
    CheckpointMeta meta;
    meta.kind = detail::read_u32(is);
    uint32_t ndims = detail::read_u32(is);
    if (ndims < 2 || ndims > 64) throw std::runtime_error("checkpoint: bad layer count");
    std::vector<int> dims(ndims);
    for (auto& d : dims) d = static_cast<int>(detail::read_u32(is));
    int embed_dim = static_cast<int>(detail::read_u32(is));
    detail::read_f64s(is, meta.meta, 4);
    Rng dummy(0);
    MlpNetwork net = mlp_init(dims, embed_dim, dummy);
    net.for_each_param([&](std::span<double> p) { detail::read_f64s(is, p.data(), p.size()); });
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    if (meta_out) *meta_out = meta;
    return net;
}

inline void save_network_file(const std::string& path, MlpNetwork& net, const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    save_network(os, net, meta);
}

inline MlpNetwork load_network_file(const std::string& path, CheckpointMeta* meta_out = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    return load_network(is, meta_out);
}

} // namespace sb
