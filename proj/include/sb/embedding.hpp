// Sinusoidal conditioning embedding: all sines first, then all cosines,
// over geometric frequencies spanning [1, 1e4].

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sb {

inline std::vector<double> sinusoidal_embedding(double t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("sinusoidal_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int k = 0; k < half; ++k) {
        double freq = half > 1 ? std::pow(1e4, static_cast<double>(k) / (half - 1)) : 1.0;
        out[k] = std::sin(t * freq);
        out[half + k] = std::cos(t * freq);
    }
    return out;
}

} // namespace sb
