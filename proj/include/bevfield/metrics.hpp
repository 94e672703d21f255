// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/bevmap.hpp"
#include "bevfield/generator.hpp"
#include "bevfield/signal.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace bevfield {

inline constexpr double kPsnrCapDb = 80.0;

/// Mean squared error over every pixel and channel.
double mse(const Image &a, const Image &b);

/// 10 log10(i_max^2 / MSE), clamped to cap_db (also when MSE is 0).
double psnr(const Image &a, const Image &b, double i_max, double cap_db = kPsnrCapDb);

/// PSNR from an MSE value under the same capping rule.
double psnr_from_mse(double mse, double i_max, double cap_db = kPsnrCapDb);

/// Mean squared difference between horizontally and vertically adjacent
/// pixels, over all channels. Anti-aliasing lowers it on aliased content.
double high_frequency_energy(const Image &img);

struct EqtConfig {
    std::vector<std::uint64_t> latent_seeds{0, 1, 2};
    int latent_dim = 64;
    std::vector<int> shifts{1, 2, 4, 8}; // BEV pixels along the column axis
    int mapping    = 1;                   // image pixels per BEV pixel
    std::optional<int> crop_border;       // default: default_crop_border()
    double i_max  = 2.0;
    double cap_db = kPsnrCapDb;
};

nlohmann::json to_json(const EqtConfig &c);

struct EqtSample {
    std::uint64_t latent_seed = 0;
    int shift                 = 0;
    double mse                = 0.0;
    double psnr_db            = 0.0;
};

struct EqtReport {
    double eqt_db      = 0.0;
    bool capped        = false;
    int n_latents      = 0;
    int n_shifts       = 0;
    int shift_range    = 0; // max |shift|, BEV pixels
    int crop_border    = 0; // image pixels
    double mean_mse    = 0.0;
    std::vector<EqtSample> samples;

    /// Median of the per-sample PSNR values.
    double median_psnr_db() const;
};

nlohmann::json to_json(const EqtReport &r);

/// Half support of the first encoder low-pass plus the largest |shift|.
int default_crop_border(const LowpassDesign &design, const std::vector<int> &shifts, int mapping = 1);

/// G(B, s, window) -> image in [0, 1]. `window` places B in the global frame.
using EqtGenerator = std::function<Image(const BevMap &, const LatentCode &, const WindowSpec &)>;

/// (s, x) -> image of the input translated by x BEV pixels. x = 0 gives G(B, s).
using ShiftedRender = std::function<Image(const LatentCode &, int)>;

/// Monte Carlo EQT over every (latent, shift) pair. Each pair compares
/// render(s, x) against render(s, 0) shifted by mapping * x image pixels, on
/// the overlap minus crop_border on all sides, after remapping to [-1, 1].
EqtReport eqt_core(const ShiftedRender &render, const EqtConfig &cfg);

/// Translation inside B's own margin: t_x[B] = translate(B, x, 0), with the
/// window origin moved by -x so global input features move along.
EqtReport eqt(const EqtGenerator &gen, const BevMap &b, const WindowSpec &window,
              const EqtConfig &cfg);

/// Translation by sliding a crop over a larger global map: t_x[B] is the
/// window moved by -x columns. Content may enter or leave the window.
EqtReport eqt_sliding(const EqtGenerator &gen, const BevMap &global, const WindowSpec &window,
                      const EqtConfig &cfg);

} // namespace bevfield
