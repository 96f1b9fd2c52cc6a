#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace iosw {

/// Deterministic RNG with hand-rolled real distributions.
/// std::uniform_real_distribution is implementation-defined, so ensembles
/// that must be reproducible across toolchains draw through this wrapper.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Log-uniform on [lo, hi], lo > 0.
    double log_uniform(double lo, double hi) {
        return lo * std::pow(hi / lo, uniform01());
    }

    /// Uniform integer on [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(engine_() % span);
    }

    bool bernoulli(double p) { return uniform01() < p; }

  private:
    std::mt19937_64 engine_;
};

} // namespace iosw
