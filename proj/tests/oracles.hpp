// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

// Reference implementations shared by the unit tests and the acceptance
// runner. They are written independently of the engine code paths they check.

#pragma once

#include "bevfield/renderer.hpp"
#include "bevfield/rng.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <numbers>

namespace bevfield::oracle {

/// Front-to-back alpha compositing: one running transmittance, updated after
/// each sample, with no cumulative sums or exponent tricks.
inline std::array<double, 3>
sequential_composite(const SampleBatch &b) {
    std::array<double, 3> acc{};
    double trans = 1.0;
    for (std::size_t i = 0; i < b.sigmas.size(); ++i) {
        const double alpha = 1.0 - std::exp(-b.sigmas[i] * b.deltas[i]);
        for (int k = 0; k < 3; ++k) {
            acc[k] += trans * alpha * b.colors[i][k];
        }
        trans *= 1.0 - alpha;
    }
    return acc;
}

/// Batch with 1..max_n samples, densities spanning transparent to opaque.
inline SampleBatch
random_batch(Rng &rng, int max_n = 64) {
    SampleBatch b;
    const int n = rng.uniform_int(1, max_n);
    for (int i = 0; i < n; ++i) {
        b.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
        b.deltas.push_back(rng.uniform(1e-3, 0.5));
        b.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
        // Mix of zero, moderate and very large densities.
        const double pick = rng.uniform();
        b.sigmas.push_back(pick < 0.2 ? 0.0 : pick < 0.9 ? rng.uniform(0.0, 5.0) : rng.uniform(50.0, 1e4));
    }
    return b;
}

/// |sum_n h[n] exp(-2 pi i f n)| with taps centered on n = 0.
inline double
dft_magnitude(const std::vector<double> &taps, double freq) {
    const int L = static_cast<int>(taps.size() / 2);
    std::complex<double> acc = 0.0;
    for (int n = -L; n <= L; ++n) {
        acc += taps[n + L] * std::polar(1.0, -2.0 * std::numbers::pi * freq * n);
    }
    return std::abs(acc);
}

/// Field with the same density and color everywhere.
class ConstantField final : public RadianceField {
  public:
    ConstantField(double sigma, std::array<double, 3> color) : mSigma(sigma), mColor(color) {}

    FieldSample query_at(const Vec3 &, const Vec3 &, const Vec3 &) const override {
        return {mColor, mSigma};
    }

  private:
    double mSigma;
    std::array<double, 3> mColor;
};

} // namespace bevfield::oracle
