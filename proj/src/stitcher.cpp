// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/stitcher.hpp"

#include <algorithm>
#include <cmath>

namespace bevfield {

std::string
to_string(Axis a) {
    return a == Axis::x ? "x" : "y";
}

Axis
axis_from_string(const std::string &s) {
    if (s == "x") {
        return Axis::x;
    }
    if (s == "y") {
        return Axis::y;
    }
    fail(ErrorKind::invalid_argument, "unknown traversal axis '" + s + "' (expected x or y)");
}

int
StitchConfig::n_loc() const {
    return static_cast<int>(std::lround(n_step / f_norm));
}

void
StitchConfig::validate() const {
    if (window_h < 1 || window_w < 1 || frame_h < 1 || frame_w < 1) {
        fail(ErrorKind::invalid_argument, "window and frame sizes must be positive");
    }
    if (n_step < 1) {
        fail(ErrorKind::invalid_argument, "n_step must be >= 1");
    }
    if (!(f_norm > 0.0) || !std::isfinite(f_norm)) {
        fail(ErrorKind::invalid_argument, "f_norm must be positive and finite");
    }
    const int extent = axis == Axis::x ? frame_w : frame_h;
    const int n      = n_loc();
    if (n < 1 || n > extent) {
        fail(ErrorKind::invalid_argument, "n_loc = round(n_step / f_norm) = " + std::to_string(n) +
                                              " must lie in [1, " + std::to_string(extent) + "]");
    }
}

nlohmann::json
to_json(const StitchConfig &c) {
    return {{"window_h", c.window_h}, {"window_w", c.window_w}, {"n_step", c.n_step},
            {"frame_h", c.frame_h},   {"frame_w", c.frame_w},   {"f_norm", c.f_norm},
            {"axis", to_string(c.axis)}, {"cross_origin", c.cross_origin}, {"n_loc", c.n_loc()}};
}

StitchConfig
stitch_config_from_json(const nlohmann::json &j) {
    StitchConfig c;
    c.window_h     = j.value("window_h", c.window_h);
    c.window_w     = j.value("window_w", c.window_w);
    c.n_step       = j.value("n_step", c.n_step);
    c.frame_h      = j.value("frame_h", c.frame_h);
    c.frame_w      = j.value("frame_w", c.frame_w);
    c.f_norm       = j.value("f_norm", c.f_norm);
    c.axis         = axis_from_string(j.value("axis", std::string("x")));
    c.cross_origin = j.value("cross_origin", c.cross_origin);
    c.validate();
    return c;
}

std::vector<WindowSpec>
slide(const BevMap &global, const StitchConfig &cfg) {
    cfg.validate();
    const bool alongX  = cfg.axis == Axis::x;
    const int extent   = alongX ? global.width() : global.height();
    const int across   = alongX ? global.height() : global.width();
    const int winAlong = alongX ? cfg.window_w : cfg.window_h;
    const int winCross = alongX ? cfg.window_h : cfg.window_w;
    if (winAlong > extent || cfg.cross_origin < 0 || cfg.cross_origin + winCross > across) {
        fail(ErrorKind::invalid_argument,
             "window " + std::to_string(cfg.window_h) + "x" + std::to_string(cfg.window_w) +
                 " does not fit the " + std::to_string(global.height()) + "x" +
                 std::to_string(global.width()) + " map");
    }
    const int K = (extent - winAlong) / cfg.n_step + 1;
    std::vector<WindowSpec> out;
    out.reserve(K);
    for (int k = 0; k < K; ++k) {
        const int along = k * cfg.n_step;
        out.push_back(alongX ? WindowSpec{cfg.cross_origin, along, cfg.window_h, cfg.window_w}
                             : WindowSpec{along, cfg.cross_origin, cfg.window_h, cfg.window_w});
    }
    return out;
}

nlohmann::json
to_json(const CameraRig &r) {
    return {{"camera", to_json(r.camera)}};
}

CameraRig
camera_rig_from_json(const nlohmann::json &j) {
    return {camera_from_json(j.at("camera"))};
}

CameraRig
side_rig(const StitchConfig &cfg, const WorldToGrid &w2g, double z_max) {
    const double ww = cfg.window_w / w2g.scale;
    const double wh = cfg.window_h / w2g.scale;
    const Vec3 eye{0.5 * ww, 0.125 * wh, std::max(0.25 * wh, z_max + 1.0)};
    const Vec3 target{0.5 * ww, 0.5 * wh, 0.0};
    return {Camera::look_at(eye, target, {0.0, 0.0, 1.0}, cfg.f_norm, 0.5, 2.0 * std::max(ww, wh))};
}

CameraRig
top_down_rig(const StitchConfig &cfg, const WorldToGrid &w2g, double z_min, double z_max) {
    const double ww = cfg.window_w / w2g.scale;
    const double wh = cfg.window_h / w2g.scale;
    return {Camera::top_down(0.5 * ww, 0.5 * wh, z_max + 1.0, 0.5 * ww, 1.0, 1.0 + (z_max - z_min))};
}

Camera
place_rig(const CameraRig &rig, const WorldToGrid &w2g, const WindowSpec &window) {
    return rig.camera.translated({w2g.world_x(window.col), w2g.world_y(window.row), 0.0});
}

FieldFactory
procedural_factory(Palette palette, ProceduralOptions opts) {
    return [palette = std::move(palette), opts](const BevMap &local, const LatentCode &,
                                                const WindowSpec &) {
        return std::shared_ptr<const RadianceField>(procedural_field(local.objects(), palette, opts));
    };
}

FieldFactory
neural_factory(std::shared_ptr<const GeneratorParams> params) {
    return [params = std::move(params)](const BevMap &local, const LatentCode &s,
                                        const WindowSpec &window) {
        return std::shared_ptr<const RadianceField>(neural_field(*params, local, s, window));
    };
}

std::vector<Image>
traverse(const FieldFactory &factory, const BevMap &global, const StitchConfig &cfg,
         const CameraRig &rig, const LatentCode &s, const RenderSettings &settings,
         const Progress &progress) {
    const auto windows = slide(global, cfg);
    RenderSettings rs  = settings;
    rs.width           = cfg.frame_w;
    rs.height          = cfg.frame_h;
    std::vector<Image> frames;
    frames.reserve(windows.size());
    const int total = static_cast<int>(windows.size());
    for (int k = 0; k < total; ++k) {
        const WindowSpec &w = windows[k];
        const auto field    = factory(crop_window(global, w), s, w);
        frames.push_back(render(*field, place_rig(rig, global.world_to_grid(), w), rs));
        if (progress) {
            progress(k + 1, total);
        }
    }
    return frames;
}

int
strip_start(int extent, int n_loc) {
    return (extent - n_loc) / 2;
}

Image
stitch(const std::vector<Image> &frames, const StitchConfig &cfg) {
    if (frames.empty()) {
        fail(ErrorKind::invalid_argument, "stitch needs at least one frame");
    }
    const int h = frames[0].height(), w = frames[0].width(), c = frames[0].channels();
    for (const auto &f : frames) {
        if (f.height() != h || f.width() != w || f.channels() != c) {
            fail(ErrorKind::invalid_argument, "frames differ in size");
        }
    }
    const bool alongX = cfg.axis == Axis::x;
    const int n       = cfg.n_loc();
    const int extent  = alongX ? w : h;
    if (n < 1 || n > extent) {
        fail(ErrorKind::invalid_argument, "n_loc " + std::to_string(n) + " exceeds frame extent " +
                                              std::to_string(extent));
    }
    const int start = strip_start(extent, n);
    const int K     = static_cast<int>(frames.size());
    Image out(alongX ? h : K * n, alongX ? K * n : w, c);
    for (int k = 0; k < K; ++k) {
        const Image &f = frames[k];
        for (int i = 0; i < (alongX ? h : n); ++i) {
            for (int j = 0; j < (alongX ? n : w); ++j) {
                const int sr = alongX ? i : start + i;
                const int sc = alongX ? start + j : j;
                const int dr = alongX ? i : k * n + i;
                const int dc = alongX ? k * n + j : j;
                std::copy_n(f.pixel(sr, sc), c, out.pixel(dr, dc));
            }
        }
    }
    return out;
}

nlohmann::json
to_json(const StitchReport &r) {
    return {{"K", r.K},
            {"n_step", r.n_step},
            {"n_loc", r.n_loc},
            {"f_norm", r.f_norm},
            {"axis", to_string(r.axis)},
            {"frame", {{"h", r.frame_h}, {"w", r.frame_w}}},
            {"panorama", {{"h", r.panorama_h}, {"w", r.panorama_w}}}};
}

StitchReport
make_report(const std::vector<Image> &frames, const Image &panorama, const StitchConfig &cfg) {
    StitchReport r;
    r.K          = static_cast<int>(frames.size());
    r.n_step     = cfg.n_step;
    r.n_loc      = cfg.n_loc();
    r.f_norm     = cfg.f_norm;
    r.axis       = cfg.axis;
    r.frame_h    = frames.empty() ? 0 : frames[0].height();
    r.frame_w    = frames.empty() ? 0 : frames[0].width();
    r.panorama_h = panorama.height();
    r.panorama_w = panorama.width();
    return r;
}

double
serration_diff(const Image &reference, const StitchConfig &refCfg, const Image &panorama,
               const StitchConfig &cfg) {
    if (refCfg.n_step != 1 || refCfg.f_norm != 1.0 || cfg.f_norm != 1.0) {
        fail(ErrorKind::invalid_argument, "serration_diff needs an n_step = 1 reference and f_norm = 1");
    }
    if (refCfg.axis != cfg.axis || reference.channels() != panorama.channels()) {
        fail(ErrorKind::invalid_argument, "panoramas are not comparable");
    }
    const bool alongX = cfg.axis == Axis::x;
    const int extent  = alongX ? cfg.frame_w : cfg.frame_h;
    const int refExt  = alongX ? refCfg.frame_w : refCfg.frame_h;
    const int offset  = strip_start(extent, cfg.n_loc()) - strip_start(refExt, 1);
    const int across  = alongX ? panorama.height() : panorama.width();
    if (across != (alongX ? reference.height() : reference.width())) {
        fail(ErrorKind::invalid_argument, "panoramas differ across the traversal axis");
    }
    const int nPano = alongX ? panorama.width() : panorama.height();
    const int nRef  = alongX ? reference.width() : reference.height();
    double acc      = 0.0;
    std::size_t cnt = 0;
    for (int j = 0; j < nPano; ++j) {
        const int r = j + offset;
        if (r < 0 || r >= nRef) {
            continue;
        }
        for (int a = 0; a < across; ++a) {
            const double *p = alongX ? panorama.pixel(a, j) : panorama.pixel(j, a);
            const double *q = alongX ? reference.pixel(a, r) : reference.pixel(r, a);
            for (int k = 0; k < panorama.channels(); ++k) {
                acc += std::abs(p[k] - q[k]);
                ++cnt;
            }
        }
    }
    if (cnt == 0) {
        fail(ErrorKind::invalid_argument, "panoramas do not overlap");
    }
    return acc / static_cast<double>(cnt);
}

} // namespace bevfield
