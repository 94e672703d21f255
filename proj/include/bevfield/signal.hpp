// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/common.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bevfield {

/// Dense H x W x C grid of doubles, row-major with channels minor, carrying
/// the world placement of its pixels. This is the working tensor of the
/// generator and the image type of the renderer.
class FeatureGrid {
  public:
    FeatureGrid() = default;
    FeatureGrid(int h, int w, int c, WorldToGrid w2g = {});
    FeatureGrid(int h, int w, int c, std::vector<double> data, WorldToGrid w2g = {});

    int height() const { return mH; }
    int width() const { return mW; }
    int channels() const { return mC; }
    std::size_t size() const { return mData.size(); }

    double &at(int row, int col, int ch) { return mData[index(row, col) + ch]; }
    double at(int row, int col, int ch) const { return mData[index(row, col) + ch]; }
    double *pixel(int row, int col) { return mData.data() + index(row, col); }
    const double *pixel(int row, int col) const { return mData.data() + index(row, col); }

    std::span<double> data() { return mData; }
    std::span<const double> data() const { return mData; }

    const WorldToGrid &world_to_grid() const { return mW2g; }
    void set_world_to_grid(const WorldToGrid &t) { mW2g = t; }

    bool all_finite() const;
    bool operator==(const FeatureGrid &) const = default;

  private:
    std::size_t index(int row, int col) const {
        return (static_cast<std::size_t>(row) * mW + col) * mC;
    }

    int mH = 0;
    int mW = 0;
    int mC = 0;
    std::vector<double> mData;
    WorldToGrid mW2g{};
};

using Image = FeatureGrid; // 3 channels, values in [0, 1]

// ---------------------------------------------------------------------------
// Fourier features over global coordinates
// ---------------------------------------------------------------------------

struct FourierConfig {
    std::vector<double> amplitudes;
    std::vector<std::array<double, 2>> frequencies; // cycles per world unit, (x, y)

    int channels() const { return 2 * static_cast<int>(amplitudes.size()); }
};

/// `channels / 2` isotropic frequencies with log-spaced magnitudes between
/// `min_cycles_per_px` and `max_cycles_per_px` (relative to a grid with
/// `scale` pixels per world unit) and golden-angle directions; unit amplitudes.
FourierConfig default_fourier(int channels, double scale, double min_cycles_per_px = 1.0 / 64.0,
                              double max_cycles_per_px = 0.4);

/// Channel 2i = a_i cos(2 pi b_i . v), channel 2i+1 = a_i sin(2 pi b_i . v), with
/// v the world coordinate of global pixel (window.row + i, window.col + j)
/// under `global_w2g`. Throws if any |b_i| component reaches the Nyquist rate.
FeatureGrid fourier_grid(const FourierConfig &cfg, const WindowSpec &window,
                         const WorldToGrid &global_w2g);

// ---------------------------------------------------------------------------
// FIR low-pass filters and resampling
// ---------------------------------------------------------------------------

struct LowpassDesign {
    double half_width = 6.0; // sinc zero crossings on each side
    double beta       = 8.0; // Kaiser shape parameter

    bool operator==(const LowpassDesign &) const = default;
};

struct FirFilter {
    std::vector<double> taps; // odd length, symmetric, unit DC gain
    double cutoff_frac = 0.5; // cycles per sample
    LowpassDesign design{};

    int half_length() const { return static_cast<int>(taps.size() / 2); }
};

/// Kaiser-windowed sinc with ceil(half_width / (2 cutoff)) taps per side.
FirFilter design_lowpass(double cutoff_frac, double half_width = 6.0, double beta = 8.0);

/// |H(f)| of the filter at normalized frequency f (cycles per sample).
double frequency_response(const FirFilter &f, double freq);

/// Separable convolution, rows then columns, zero-padded. Requires the grid to
/// be at least as large as the filter in both axes.
FeatureGrid filter2d(const FeatureGrid &g, const FirFilter &f);

/// Low-pass at cutoff 0.5 / factor, then keep every factor-th pixel starting at
/// pixel 0. On grids smaller than the designed filter the half width shrinks
/// until the taps fit. `lowpass = false` gives plain decimation.
FeatureGrid downsample(const FeatureGrid &g, int factor, bool lowpass = true,
                       const LowpassDesign &design = {});

/// Bilinear resize to (H * factor, W * factor); output pixel factor * i
/// coincides with input pixel i. No post-filter.
FeatureGrid upsample(const FeatureGrid &g, int factor);

/// Integer shift with zero fill: out(r + dy, c + dx) = g(r, c).
FeatureGrid shift(const FeatureGrid &g, int dx, int dy);

/// Rows [row0, row0 + h) and columns [col0, col0 + w); world placement kept.
FeatureGrid crop(const FeatureGrid &g, int row0, int col0, int h, int w);

// ---------------------------------------------------------------------------
// Positional embedding and sampling
// ---------------------------------------------------------------------------

struct PeConfig {
    int n_freqs = 4;
    double base = 1.0;

    int dims() const { return 2 * n_freqs; }
    bool operator==(const PeConfig &) const = default;
};

/// [sin(2^l pi base z), cos(2^l pi base z)] for l = 0 .. L-1, interleaved.
void pe(double z, const PeConfig &cfg, std::span<double> out);
std::vector<double> pe(double z, const PeConfig &cfg);

/// Bilinear interpolation at world (x, y); coordinates beyond the outermost
/// pixel centers clamp to the border pixels.
void bilinear_sample(const FeatureGrid &g, double x, double y, std::span<double> out);
std::vector<double> bilinear_sample(const FeatureGrid &g, double x, double y);

// ---------------------------------------------------------------------------
// Serialization (magic "FGRID001"; values stored as f32)
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_grid(const FeatureGrid &g);
FeatureGrid decode_grid(std::span<const std::uint8_t> bytes);

} // namespace bevfield
