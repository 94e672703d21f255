// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/bevmap.hpp"
#include "bevfield/generator.hpp"
#include "bevfield/renderer.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace bevfield {

/// Traversal axis. `x` slides windows along columns and stitches vertical
/// strips; `y` slides along rows and stitches horizontal strips.
enum class Axis { x, y };

std::string to_string(Axis a);
Axis axis_from_string(const std::string &s);

struct StitchConfig {
    int window_h = 64; // BEV pixels
    int window_w = 64;
    int n_step   = 10; // BEV pixels per slide
    int frame_h  = 64; // render pixels
    int frame_w  = 64;
    double f_norm = 1.0;
    Axis axis     = Axis::x;
    int cross_origin = 0; // window origin across the traversal axis

    /// round(n_step / f_norm).
    int n_loc() const;
    /// Throws Error(invalid_argument) unless n_step >= 1 and 1 <= n_loc <= the
    /// frame extent along the axis.
    void validate() const;
};

nlohmann::json to_json(const StitchConfig &c);
StitchConfig stitch_config_from_json(const nlohmann::json &j);

/// Windows at k * n_step along the axis for k = 0 .. K-1 with
/// K = floor((extent - window) / n_step) + 1.
std::vector<WindowSpec> slide(const BevMap &global, const StitchConfig &cfg);

/// Camera pose relative to a window: world coordinates are measured from the
/// world position of the window's grid corner (0, 0).
struct CameraRig {
    Camera camera;
};

nlohmann::json to_json(const CameraRig &r);
CameraRig camera_rig_from_json(const nlohmann::json &j);

/// Pinhole camera beside the window, looking across it with a downward pitch
/// so that image columns follow +x. Coordinates are multiples of 1/8 world
/// unit for the default 64 px window at scale 1.
CameraRig side_rig(const StitchConfig &cfg, const WorldToGrid &w2g, double z_max = 8.0);

/// Orthographic top-down camera covering the window, one image pixel per BEV
/// pixel when the frame matches the window size.
CameraRig top_down_rig(const StitchConfig &cfg, const WorldToGrid &w2g, double z_min = 0.0,
                       double z_max = 8.0);

/// Camera for the window at grid origin (row, col) of a map with `w2g`.
Camera place_rig(const CameraRig &rig, const WorldToGrid &w2g, const WindowSpec &window);

using FieldFactory = std::function<std::shared_ptr<const RadianceField>(
    const BevMap &local, const LatentCode &s, const WindowSpec &window)>;

FieldFactory procedural_factory(Palette palette, ProceduralOptions opts = {});
FieldFactory neural_factory(std::shared_ptr<const GeneratorParams> params);

using Progress = std::function<void(int done, int total)>;

/// One frame per window, rendered with the rig attached to the window and the
/// same latent for every window. `settings` width/height are replaced by the
/// frame size.
std::vector<Image> traverse(const FieldFactory &factory, const BevMap &global,
                            const StitchConfig &cfg, const CameraRig &rig, const LatentCode &s,
                            const RenderSettings &settings, const Progress &progress = {});

/// First column (or row) of the n_loc central strip: floor((extent - n_loc) / 2).
int strip_start(int extent, int n_loc);

/// Concatenates the central n_loc strip of every frame along the axis.
Image stitch(const std::vector<Image> &frames, const StitchConfig &cfg);

struct StitchReport {
    int K         = 0;
    int n_step    = 0;
    int n_loc     = 0;
    double f_norm = 1.0;
    Axis axis     = Axis::x;
    int frame_h = 0, frame_w = 0;
    int panorama_h = 0, panorama_w = 0;
};

nlohmann::json to_json(const StitchReport &r);
StitchReport make_report(const std::vector<Image> &frames, const Image &panorama,
                         const StitchConfig &cfg);

/// Mean absolute difference between `panorama` and the n_step = 1 `reference`
/// over their aligned overlap. Both configs must have f_norm = 1 so that one
/// image strip corresponds to one BEV pixel of travel; strip k * n_step + m of
/// `panorama` lines up with reference strip k * n_step + m + start - ref_start.
double serration_diff(const Image &reference, const StitchConfig &ref_cfg, const Image &panorama,
                      const StitchConfig &cfg);

} // namespace bevfield
