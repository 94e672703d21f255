// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace bevfield {

/// splitmix64 finalizer over (seed, stream); derives independent per-item seeds.
constexpr std::uint64_t
mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z               = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z               = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Seeded generator with distribution transforms written out explicitly, so
/// streams are identical across standard library implementations
/// (std::uniform_real_distribution and friends are implementation-defined).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : mEngine(seed) {}

    std::uint64_t bits() { return mEngine(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(mEngine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] (inclusive).
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(mEngine() % span);
    }

    /// Standard normal via Box-Muller; no cached second value so the stream
    /// position depends only on the number of calls.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    std::mt19937_64 mEngine;
};

} // namespace bevfield
