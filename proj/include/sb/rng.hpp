// Counter-based seeded random number generator with splittable streams.
//
// The generator is stateless apart from (key, counter): output k of stream s
// is a bijective 64-bit mix of key(s) + k * golden-ratio increment. Identical
// seeds therefore reproduce identical sequences on any platform, and streams
// derived from distinct indices are statistically independent.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace sb {

class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed) : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

    /// Independent stream derived from this generator's key and an index.
    /// The child starts at counter 0; the parent is unchanged.
    Rng stream(uint64_t index) const {
        Rng r;
        r.key_ = mix64(key_ ^ mix64(index + 0x9e3779b97f4a7c15ULL));
        return r;
    }

    uint64_t next_u64() {
        counter_ += 0x9e3779b97f4a7c15ULL;
        return mix64(key_ + counter_);
    }

    /// Uniform in (0, 1), never returning exactly 0 or 1.
    double uniform() {
        double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Standard normal draw, Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    uint64_t below(uint64_t n) { return next_u64() % n; }

private:
    static uint64_t mix64(uint64_t z) {
        // splitmix64 finalizer
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    uint64_t key_ = 0;
    uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline std::vector<double> rng_normal(Rng& rng, std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = rng.normal();
    return out;
}

} // namespace sb
