#ifndef SMAC_RNG_HPP
#define SMAC_RNG_HPP

#include <cstdint>
#include <random>

namespace smac {

// Deterministic RNG used everywhere a random draw is needed. The helpers
// below avoid std::*_distribution so that a given seed produces the same
// stream on every standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        return static_cast<int>(engine_() % static_cast<uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

} // namespace smac

#endif
