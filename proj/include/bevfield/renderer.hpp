// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/bevmap.hpp"
#include "bevfield/field.hpp"
#include "bevfield/signal.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace bevfield {

enum class Projection { pinhole, orthographic };

/// Camera frame: image columns follow `right`, image rows follow `down`, the
/// optical axis is `forward`. The three axes must be orthonormal; handedness
/// is not constrained so a top-down camera can keep the BEV raster layout.
struct Camera {
    Projection projection = Projection::pinhole;
    Vec3 position{};
    Vec3 right{1.0, 0.0, 0.0};
    Vec3 down{0.0, 1.0, 0.0};
    Vec3 forward{0.0, 0.0, 1.0};
    double f_norm = 1.0;      // focal length / half image width (pinhole)
    double half_width = 1.0;  // world half extent of the image width (orthographic)
    double near = 0.1;
    double far  = 10.0;

    /// Right-handed pinhole camera looking from `eye` at `target`.
    static Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &world_up, double f_norm,
                          double near, double far);

    /// Orthographic camera looking straight down (-z) with image columns along
    /// +x and rows along +y, covering [cx - hw, cx + hw] in x.
    static Camera top_down(double cx, double cy, double z_top, double half_width, double near,
                           double far);

    Camera translated(const Vec3 &t) const;

    /// Throws Error(invalid_argument) on a non-orthonormal frame or bad ranges.
    void validate() const;
};

nlohmann::json to_json(const Camera &c);
Camera camera_from_json(const nlohmann::json &j);

struct Ray {
    Vec3 origin;
    Vec3 dir; // unit length
};

/// Ray through continuous image coordinate (px, py), with pixel (row i, col j)
/// centered at (j + 0.5, i + 0.5) on a W x H image.
Ray ray_through(const Camera &cam, int W, int H, double px, double py);

/// H x W rays through the pixel centers, row-major.
std::vector<Ray> make_rays(const Camera &cam, int W, int H);

struct RaySamples {
    std::vector<double> ts;     // distances along the ray
    std::vector<double> deltas; // interval lengths, summing to far - near
};

/// N uniform bins over [near, far]; midpoints, or one uniform draw per bin
/// when a jitter seed is given.
RaySamples sample_along(double near, double far, int n, std::optional<std::uint64_t> jitter_seed = {});

struct SampleBatch {
    std::vector<Vec3> points;
    std::vector<double> deltas;
    std::vector<std::array<double, 3>> colors;
    std::vector<double> sigmas;
};

SampleBatch sample_batch(const RadianceField &field, const Ray &ray, double near, double far, int n,
                         std::optional<std::uint64_t> jitter_seed = {});

struct CompositeOptions {
    // Runs the transmittance product through the current sample (j <= i).
    bool paper_exact_compositing = false;
    std::array<double, 3> background{0.0, 0.0, 0.0};
};

struct CompositeResult {
    std::array<double, 3> color{};
    std::vector<double> weights;
    std::vector<double> transmittance;
};

/// C = sum_i T_i (1 - exp(-sigma_i delta_i)) c_i + (1 - sum_i w_i) * background.
CompositeResult composite(const SampleBatch &batch, const CompositeOptions &opts = {});

/// Allocation-free variant used by the renderer; returns the color only.
std::array<double, 3> composite(std::span<const FieldSample> samples, std::span<const double> deltas,
                                const CompositeOptions &opts);

struct RenderSettings {
    int width     = 64;
    int height    = 64;
    int n_samples = 32;
    int ssaa      = 1;
    std::optional<std::uint64_t> jitter_seed;
    CompositeOptions compositing{};
    LowpassDesign lowpass{};
};

nlohmann::json to_json(const RenderSettings &s);

/// Renders an H x W x 3 image in [0, 1]. With ssaa = k > 1 the image is ray
/// marched at k x resolution plus a filter-width apron, anti-alias
/// downsampled by k and cropped, so the filter sees real samples at the borders.
Image render(const RadianceField &field, const Camera &cam, const RenderSettings &settings);

// ---------------------------------------------------------------------------
// Procedural oracle field
// ---------------------------------------------------------------------------

struct ProceduralOptions {
    double sigma_max  = 40.0;
    double edge_width = 0.25; // smoothstep half width around the surface, world units
    bool ground       = true;
    std::array<double, 3> ground_albedo{0.45, 0.45, 0.42};
    // Ground checkerboard (period in world units); not translation covariant.
    bool checker          = false;
    double checker_period = 1.0;
    std::array<double, 3> checker_dark{0.05, 0.05, 0.05};
    std::array<double, 3> checker_light{0.95, 0.95, 0.95};
};

/// Analytic field: smoothstep density over sphere / box / cylinder signed
/// distances, color blended by density, ground slab at z <= 0. Queries use
/// anchor-relative arithmetic so translated scenes and cameras with
/// dyadic coordinates reproduce bit-identical samples.
class ProceduralField final : public RadianceField {
  public:
    ProceduralField(std::vector<SceneObject> objects, Palette palette, ProceduralOptions opts = {});

    FieldSample query_at(const Vec3 &anchor, const Vec3 &offset, const Vec3 &dir) const override;

    const std::vector<SceneObject> &objects() const { return mObjects; }
    const ProceduralOptions &options() const { return mOpts; }

  private:
    std::vector<SceneObject> mObjects;
    Palette mPalette;
    ProceduralOptions mOpts;
};

std::shared_ptr<ProceduralField> procedural_field(const std::vector<SceneObject> &objects,
                                                  const Palette &palette,
                                                  const ProceduralOptions &opts = {});

/// Signed distance of point q (relative to the object's ground center) to the
/// object's solid; negative inside.
double object_sdf(const SceneObject &obj, const Vec3 &q);

} // namespace bevfield
