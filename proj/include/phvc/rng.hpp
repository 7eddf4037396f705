#pragma once

#include <cmath>
#include <cstdint>

namespace phvc {

// SplitMix64 stream. The whole toolkit draws randomness through this one
// generator so runs are bit-identical for a given seed on any platform
// (std:: distributions are not bit-specified across library versions).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // derive an independent stream, e.g. one per clip or tensor
    Rng fork(std::uint64_t tag) const {
        Rng r(state_ ^ (0xA0761D6478BD642Full * (tag + 1)));
        r.next_u64();
        return r;
    }

private:
    std::uint64_t state_;
};

} // namespace phvc
