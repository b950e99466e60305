#pragma once

#include <cstdint>
#include <random>

namespace ecgl {

/// Seeded generator whose derived draws are computed here rather than by the
/// standard distributions, so streams are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t index(std::uint64_t n);

    /// Standard normal via Box-Muller (one value per call, the pair's twin is cached).
    double normal();

    /// Number of failures before the first success of a Bernoulli(p) sequence, p in (0, 1].
    std::uint64_t geometric(double p);

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace ecgl
