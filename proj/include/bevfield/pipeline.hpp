// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/generator.hpp"
#include "bevfield/metrics.hpp"
#include "bevfield/renderer.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace bevfield {

/// Orthographic top-down camera whose image pixels coincide with b's pixels,
/// so a BEV translation of x pixels is an image translation of x pixels.
Camera bev_camera(const BevMap &b, double z_min, double z_max);

/// Desk configuration resized to a square map whose side is a multiple of
/// 2^n_levels, with the map's channel count.
GeneratorConfig generator_config_for(const RasterSpec &spec);

/// Renders neural_field(params, b, s, window) through bev_camera at `mapping`
/// image pixels per BEV pixel.
EqtGenerator neural_generator(std::shared_ptr<const GeneratorParams> params,
                              RenderSettings settings, int mapping = 1);

/// Renders the procedural field of b's objects through bev_camera; ignores s.
EqtGenerator procedural_generator(Palette palette, ProceduralOptions opts, RenderSettings settings,
                                  double z_min = 0.0, double z_max = 8.0, int mapping = 1);

enum class Ablation { full, no_lowpass, no_sel, no_padding };

std::string to_string(Ablation a);

struct AblationConfig {
    GeneratorConfig base = GeneratorConfig::desk();
    std::vector<std::uint64_t> weight_seeds{0, 1, 2, 3, 4};
    std::vector<std::uint64_t> latent_seeds{0, 1, 2};
    std::vector<int> shifts{1, 2, 4, 8};
    std::uint64_t scene_seed = 0;
    int n_samples            = 16;
    std::vector<Ablation> variants{Ablation::full, Ablation::no_lowpass, Ablation::no_sel,
                                   Ablation::no_padding};
};

nlohmann::json to_json(const AblationConfig &c);

/// Scenes shared by every variant. `padded` is an input_res canvas whose
/// objects stay inside a margin of input_res / 4. `unpadded_global` holds the
/// same objects plus filler objects on both sides of the traversal axis, so
/// content reaches the edges of `unpadded_window` and slides across them
/// under translation while the central content is unchanged.
struct AblationScene {
    BevMap padded;
    BevMap unpadded_global;
    WindowSpec unpadded_window;
};

AblationScene make_ablation_scene(const GeneratorConfig &cfg, std::uint64_t seed);

struct AblationRow {
    Ablation variant = Ablation::full;
    std::uint64_t weight_seed = 0;
    EqtReport report;
};

struct AblationTable {
    AblationConfig config;
    std::vector<AblationRow> rows;

    const AblationRow &find(Ablation v, std::uint64_t weight_seed) const;
    nlohmann::json to_json() const;
    /// Aligned text table: one row per variant, one column per weight seed.
    std::string to_text() const;
};

AblationTable run_ablation(const AblationConfig &cfg);

} // namespace bevfield
