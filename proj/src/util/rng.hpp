#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace optlab {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based seed split: seed i of a master seed is the i-th splitmix64
// output, so adding more seeds to an experiment never changes earlier runs.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master;
    std::uint64_t v = 0;
    for (std::uint64_t i = 0; i <= index; ++i) v = splitmix64(s);
    return v;
}

// mt19937_64 with hand-rolled distributions. The standard pins the engine's
// output bit-exactly but not the distributions, and reproducibility of every
// experiment byte is part of the contract, so we do not use std::*_distribution.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, cosine branch only: exactly two engine draws per call.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // N(0, sigma^2) redrawn until within clip standard deviations.
    double truncated_normal(double sigma, double clip) {
        double z = normal();
        while (std::abs(z) > clip) z = normal();
        return sigma * z;
    }

    // Uniform integer in [0, n) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace optlab
