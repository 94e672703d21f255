// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/pipeline.hpp"

#include "bevfield/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace bevfield {

Camera
bev_camera(const BevMap &b, double z_min, double z_max) {
    const WorldToGrid &t = b.world_to_grid();
    const double cx      = t.world_x(0.5 * b.width());
    const double cy      = t.world_y(0.5 * b.height());
    const double hw      = 0.5 * b.width() / t.scale;
    // One world unit above the scene top; rays span exactly [z_min, z_max].
    return Camera::top_down(cx, cy, z_max + 1.0, hw, 1.0, 1.0 + (z_max - z_min));
}

GeneratorConfig
generator_config_for(const RasterSpec &spec) {
    GeneratorConfig c = GeneratorConfig::desk();
    if (spec.h != spec.w || spec.h % (1 << c.n_levels) != 0) {
        fail(ErrorKind::invalid_argument, "neural mode needs a square map whose side is a multiple of " +
                                              std::to_string(1 << c.n_levels));
    }
    c.input_res      = spec.h;
    c.bottleneck_res = spec.h >> c.n_levels;
    c.bev_channels   = spec.channels();
    c.validate();
    return c;
}

EqtGenerator
neural_generator(std::shared_ptr<const GeneratorParams> params, RenderSettings settings, int mapping) {
    if (mapping < 1) {
        fail(ErrorKind::invalid_argument, "mapping must be a positive integer");
    }
    return [params = std::move(params), settings, mapping](const BevMap &b, const LatentCode &s,
                                                           const WindowSpec &window) {
        const auto field   = neural_field(*params, b, s, window);
        RenderSettings rs  = settings;
        rs.width           = mapping * b.width();
        rs.height          = mapping * b.height();
        return render(*field, bev_camera(b, params->config.z_min, params->config.z_max), rs);
    };
}

EqtGenerator
procedural_generator(Palette palette, ProceduralOptions opts, RenderSettings settings, double z_min,
                     double z_max, int mapping) {
    if (mapping < 1) {
        fail(ErrorKind::invalid_argument, "mapping must be a positive integer");
    }
    return [palette = std::move(palette), opts, settings, z_min, z_max,
            mapping](const BevMap &b, const LatentCode &, const WindowSpec &) {
        const ProceduralField field(b.objects(), palette, opts);
        RenderSettings rs = settings;
        rs.width          = mapping * b.width();
        rs.height         = mapping * b.height();
        return render(field, bev_camera(b, z_min, z_max), rs);
    };
}

std::string
to_string(Ablation a) {
    switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_lowpass: return "no_lowpass";
    case Ablation::no_sel: return "no_sel";
    case Ablation::no_padding: return "no_padding";
    }
    return "unknown";
}

nlohmann::json
to_json(const AblationConfig &c) {
    nlohmann::json variants = nlohmann::json::array();
    for (auto v : c.variants) {
        variants.push_back(to_string(v));
    }
    return {{"generator", to_json(c.base)},      {"weight_seeds", c.weight_seeds},
            {"latent_seeds", c.latent_seeds},    {"shifts", c.shifts},
            {"scene_seed", c.scene_seed},        {"n_samples", c.n_samples},
            {"variants", variants}};
}

AblationScene
make_ablation_scene(const GeneratorConfig &cfg, std::uint64_t seed) {
    const int n      = cfg.input_res;
    const int margin = n / 4;
    RasterSpec spec;
    spec.h         = n;
    spec.w         = n;
    spec.margin_px = margin;
    const Palette palette = Palette::clevr();
    spec.n_colors  = palette.size();
    if (spec.channels() != cfg.bev_channels) {
        fail(ErrorKind::invalid_argument, "ablation scene channels do not match the generator");
    }
    SceneSampling sampling = sampling_inside_margin(spec);
    const auto objects     = sample_scene(seed, 3, 8, palette, sampling);

    BevMap padded = rasterize(objects, spec);

    // Global map two margins wider; the window sits at column `margin`.
    RasterSpec gspec = spec;
    gspec.w          = n + 2 * margin;
    gspec.margin_px  = 0;
    std::vector<SceneObject> all;
    for (auto o : objects) {
        o.cx += margin;
        all.push_back(o);
    }
    // Fillers occupy the bands left and right of the central content.
    SceneSampling band = sampling;
    band.y0            = 0.0;
    band.y1            = n;
    const double bw    = 2.0 * margin;
    for (int side = 0; side < 2; ++side) {
        band.x0 = side == 0 ? 0.0 : n;
        band.x1 = band.x0 + bw;
        for (auto o : sample_scene(mix_seed(seed, side + 1), 3, 6, palette, band)) {
            o.id = static_cast<int>(all.size());
            all.push_back(o);
        }
    }
    return {std::move(padded), rasterize(all, gspec), WindowSpec{0, margin, n, n}};
}

const AblationRow &
AblationTable::find(Ablation v, std::uint64_t weight_seed) const {
    for (const auto &r : rows) {
        if (r.variant == v && r.weight_seed == weight_seed) {
            return r;
        }
    }
    fail(ErrorKind::not_found, "no ablation row for " + to_string(v) + " / seed " +
                                   std::to_string(weight_seed));
}

nlohmann::json
AblationTable::to_json() const {
    nlohmann::json out = {{"config", bevfield::to_json(config)}};
    nlohmann::json jr  = nlohmann::json::array();
    for (const auto &r : rows) {
        jr.push_back({{"variant", to_string(r.variant)},
                      {"weight_seed", r.weight_seed},
                      {"median_psnr_db", r.report.median_psnr_db()},
                      {"report", bevfield::to_json(r.report)}});
    }
    out["rows"] = jr;
    return out;
}

std::string
AblationTable::to_text() const {
    std::ostringstream os;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-12s", "variant");
    os << buf;
    for (auto s : config.weight_seeds) {
        std::snprintf(buf, sizeof buf, " %10s", ("seed " + std::to_string(s)).c_str());
        os << buf;
    }
    os << "   (median per-sample EQT, dB)\n";
    for (auto v : config.variants) {
        std::snprintf(buf, sizeof buf, "%-12s", to_string(v).c_str());
        os << buf;
        for (auto s : config.weight_seeds) {
            std::snprintf(buf, sizeof buf, " %10.3f", find(v, s).report.median_psnr_db());
            os << buf;
        }
        os << "\n";
    }
    return os.str();
}

AblationTable
run_ablation(const AblationConfig &cfg) {
    cfg.base.validate();
    const AblationScene scene = make_ablation_scene(cfg.base, cfg.scene_seed);
    const WindowSpec padWindow{0, 0, cfg.base.input_res, cfg.base.input_res};

    EqtConfig eq;
    eq.latent_seeds = cfg.latent_seeds;
    eq.latent_dim   = cfg.base.latent_dim;
    eq.shifts       = cfg.shifts;
    eq.crop_border  = default_crop_border(cfg.base.lowpass, cfg.shifts);

    RenderSettings rs;
    rs.n_samples = cfg.n_samples;

    AblationTable table;
    table.config = cfg;
    for (const auto seed : cfg.weight_seeds) {
        for (const auto v : cfg.variants) {
            GeneratorConfig gc = cfg.base;
            if (v == Ablation::no_lowpass) {
                gc.use_lowpass = false;
            } else if (v == Ablation::no_sel) {
                gc.use_sel = false;
            }
            auto params    = std::make_shared<const GeneratorParams>(init_params(gc, seed));
            const auto gen = neural_generator(params, rs);
            AblationRow row{v, seed, {}};
            row.report     = v == Ablation::no_padding
                                 ? eqt_sliding(gen, scene.unpadded_global, scene.unpadded_window, eq)
                                 : eqt(gen, scene.padded, padWindow, eq);
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

} // namespace bevfield
