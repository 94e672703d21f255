// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/common.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bevfield {

enum class Shape : int { cube = 0, sphere = 1, cylinder = 2 };
inline constexpr int kShapeCount = 3;

enum class ChannelSchema { onehot_color_shape, occupancy };

std::string to_string(Shape s);
std::string to_string(ChannelSchema s);
Shape shape_from_string(const std::string &s);
ChannelSchema schema_from_string(const std::string &s);

using Rgb = std::array<double, 3>;

/// Object colors. The default is the eight CLEVR colors; the one-hot schema
/// uses `size()` color channels followed by kShapeCount shape channels.
struct Palette {
    std::vector<Rgb> colors;

    static Palette clevr();
    int size() const { return static_cast<int>(colors.size()); }
};

struct SceneObject {
    int id       = -1;
    Shape shape  = Shape::sphere;
    int color    = 0;
    double cx    = 0.0; // world units
    double cy    = 0.0;
    double radius = 1.0; // footprint radius (half side for cubes), world units
    double height = 1.0;

    bool operator==(const SceneObject &) const = default;
};

/// Everything rasterization depends on besides the object list.
struct RasterSpec {
    ChannelSchema schema = ChannelSchema::onehot_color_shape;
    int h                = 64;
    int w                = 64;
    WorldToGrid world_to_grid{};
    int margin_px = 16;
    int n_colors  = 8;

    int channels() const { return schema == ChannelSchema::occupancy ? 1 : n_colors + kShapeCount; }
    bool operator==(const RasterSpec &) const = default;
};

/// Immutable BEV semantic grid, H x W x C, row-major with channels minor.
class BevMap {
  public:
    /// Validates the grid size, value domain and one-hot structure. The margin
    /// band is enforced by rasterize/edit; translate may move content into it.
    BevMap(RasterSpec spec, std::vector<float> grid, std::vector<SceneObject> objects);

    const RasterSpec &spec() const { return mSpec; }
    int height() const { return mSpec.h; }
    int width() const { return mSpec.w; }
    int channels() const { return mSpec.channels(); }
    ChannelSchema schema() const { return mSpec.schema; }
    const WorldToGrid &world_to_grid() const { return mSpec.world_to_grid; }
    int margin_px() const { return mSpec.margin_px; }

    float at(int row, int col, int ch) const {
        return mGrid[(static_cast<std::size_t>(row) * mSpec.w + col) * channels() + ch];
    }
    std::span<const float> grid() const { return mGrid; }
    const std::vector<SceneObject> &objects() const { return mObjects; }
    const SceneObject *find(int id) const;

    /// Sum of each channel over all pixels.
    std::vector<double> channel_sums() const;
    std::size_t nonzero_pixels() const;
    /// True when the outermost margin_px rows/columns are all zero.
    bool margin_band_clear() const;

    bool operator==(const BevMap &) const = default;

  private:
    RasterSpec mSpec;
    std::vector<float> mGrid;
    std::vector<SceneObject> mObjects;
};

/// Pixels covered by an object: disk for spheres/cylinders, square for cubes,
/// centered on the pixel containing the object's center.
std::vector<std::array<int, 2>> footprint_pixels(const SceneObject &obj, const WorldToGrid &w2g);

/// Later objects overwrite earlier ones where footprints overlap. Throws
/// Error(out_of_range) naming the object id when a footprint touches the margin.
BevMap rasterize(const std::vector<SceneObject> &objects, const RasterSpec &spec);

struct SceneSampling {
    // Region (world units) that every footprint must lie inside.
    double x0 = 16.0;
    double y0 = 16.0;
    double x1 = 48.0;
    double y1 = 48.0;
    double radius_min = 2.0;
    double radius_max = 4.0;
    double height_min = 2.0;
    double height_max = 5.0;
    // Allowed fraction of (r_a + r_b) by which bounding circles may overlap.
    double max_overlap = 0.0;
    // Extra clearance between bounding circles, world units.
    double min_gap     = 1.0;
    int attempt_budget = 20000;
    // Centers and sizes are snapped to this grid so translated copies of a
    // scene are exactly representable.
    double quantum = 0.125;
};

/// Region that keeps footprints clear of a `margin_px` band on a canvas.
SceneSampling sampling_inside_margin(const RasterSpec &spec);

std::vector<SceneObject> sample_scene(std::uint64_t seed, int n_min, int n_max,
                                      const Palette &palette, const SceneSampling &sampling);

BevMap crop_window(const BevMap &b, const WindowSpec &window);

/// Integer-pixel shift with zero fill; dx moves columns, dy moves rows.
BevMap translate(const BevMap &b, int dx, int dy);

struct InsertEdit {
    SceneObject object; // id < 0 assigns the next free id
};
struct RemoveEdit {
    int id = -1;
};
struct MoveEdit {
    int id    = -1;
    double dx = 0.0; // pixels
    double dy = 0.0;
};
struct RestyleEdit {
    int id = -1;
    std::optional<int> color;
    std::optional<Shape> shape;
};
using Edit = std::variant<InsertEdit, RemoveEdit, MoveEdit, RestyleEdit>;

/// Applies an edit to the object list and re-rasterizes from scratch.
BevMap apply_edit(const BevMap &b, const Edit &edit);

Edit edit_from_json(const nlohmann::json &j);
nlohmann::json to_json(const SceneObject &o);
SceneObject object_from_json(const nlohmann::json &j);
nlohmann::json bev_header(const BevMap &b);

std::vector<std::uint8_t> encode_bev(const BevMap &b);
BevMap decode_bev(std::span<const std::uint8_t> bytes);
void save_bev(const BevMap &b, const std::string &path);
BevMap load_bev(const std::string &path);

} // namespace bevfield
