// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/bevmap.hpp"

#include "bevfield/container.hpp"
#include "bevfield/rng.hpp"

#include <algorithm>
#include <cmath>

namespace bevfield {

std::string
to_string(Shape s) {
    switch (s) {
    case Shape::cube: return "cube";
    case Shape::sphere: return "sphere";
    case Shape::cylinder: return "cylinder";
    }
    return "unknown";
}

std::string
to_string(ChannelSchema s) {
    return s == ChannelSchema::occupancy ? "occupancy" : "onehot_color_shape";
}

Shape
shape_from_string(const std::string &s) {
    if (s == "cube") return Shape::cube;
    if (s == "sphere") return Shape::sphere;
    if (s == "cylinder") return Shape::cylinder;
    fail(ErrorKind::invalid_argument, "unknown shape '" + s + "'");
}

ChannelSchema
schema_from_string(const std::string &s) {
    if (s == "onehot_color_shape") return ChannelSchema::onehot_color_shape;
    if (s == "occupancy") return ChannelSchema::occupancy;
    fail(ErrorKind::invalid_argument, "unknown channel schema '" + s + "'");
}

Palette
Palette::clevr() {
    // gray, red, blue, green, brown, purple, cyan, yellow
    return {{{0.34, 0.34, 0.34},
             {0.68, 0.14, 0.14},
             {0.16, 0.29, 0.84},
             {0.11, 0.41, 0.08},
             {0.51, 0.29, 0.10},
             {0.51, 0.15, 0.75},
             {0.16, 0.82, 0.82},
             {1.00, 0.93, 0.20}}};
}

BevMap::BevMap(RasterSpec spec, std::vector<float> grid, std::vector<SceneObject> objects)
    : mSpec(spec), mGrid(std::move(grid)), mObjects(std::move(objects)) {
    if (mSpec.h < 1 || mSpec.w < 1) {
        fail(ErrorKind::invalid_argument, "BEV dims must be positive, got " +
                                              std::to_string(mSpec.h) + "x" + std::to_string(mSpec.w));
    }
    if (mSpec.margin_px < 0 || 2 * mSpec.margin_px > std::min(mSpec.h, mSpec.w)) {
        fail(ErrorKind::invalid_argument, "invalid margin " + std::to_string(mSpec.margin_px));
    }
    if (mSpec.schema == ChannelSchema::onehot_color_shape && mSpec.n_colors < 1) {
        fail(ErrorKind::invalid_argument, "palette must have at least one color");
    }
    if (!(mSpec.world_to_grid.scale > 0.0)) {
        fail(ErrorKind::invalid_argument, "world_to_grid scale must be positive");
    }
    const int c = channels();
    if (mGrid.size() != static_cast<std::size_t>(mSpec.h) * mSpec.w * c) {
        fail(ErrorKind::invalid_argument, "grid size does not match h*w*c");
    }
    for (std::size_t p = 0; p < mGrid.size(); p += c) {
        int colors = 0;
        int shapes = 0;
        for (int k = 0; k < c; ++k) {
            const float v = mGrid[p + k];
            if (v != 0.0f && v != 1.0f) {
                fail(ErrorKind::invalid_argument, "BEV values must be 0 or 1");
            }
            if (v == 1.0f) {
                (k < mSpec.n_colors || mSpec.schema == ChannelSchema::occupancy ? colors : shapes)++;
            }
        }
        if (colors > 1 || shapes > 1) {
            fail(ErrorKind::invalid_argument, "one-hot invariant violated at pixel " +
                                                  std::to_string(p / c));
        }
    }
}

const SceneObject *
BevMap::find(int id) const {
    const auto it =
        std::find_if(mObjects.begin(), mObjects.end(), [id](const auto &o) { return o.id == id; });
    return it == mObjects.end() ? nullptr : &*it;
}

std::vector<double>
BevMap::channel_sums() const {
    const int c = channels();
    std::vector<double> sums(c, 0.0);
    for (std::size_t p = 0; p < mGrid.size(); ++p) {
        sums[p % c] += mGrid[p];
    }
    return sums;
}

std::size_t
BevMap::nonzero_pixels() const {
    const int c       = channels();
    std::size_t count = 0;
    for (std::size_t p = 0; p < mGrid.size(); p += c) {
        count += std::any_of(mGrid.begin() + p, mGrid.begin() + p + c,
                             [](float v) { return v != 0.0f; });
    }
    return count;
}

bool
BevMap::margin_band_clear() const {
    const int m = mSpec.margin_px;
    for (int r = 0; r < mSpec.h; ++r) {
        for (int col = 0; col < mSpec.w; ++col) {
            const bool inBand = r < m || r >= mSpec.h - m || col < m || col >= mSpec.w - m;
            if (!inBand) {
                continue;
            }
            for (int k = 0; k < channels(); ++k) {
                if (at(r, col, k) != 0.0f) {
                    return false;
                }
            }
        }
    }
    return true;
}

std::vector<std::array<int, 2>>
footprint_pixels(const SceneObject &obj, const WorldToGrid &w2g) {
    const int ci     = static_cast<int>(std::floor(w2g.grid_y(obj.cy)));
    const int cj     = static_cast<int>(std::floor(w2g.grid_x(obj.cx)));
    const double rpx = obj.radius * w2g.scale;
    const int reach  = static_cast<int>(std::floor(rpx));

    std::vector<std::array<int, 2>> pixels;
    for (int di = -reach; di <= reach; ++di) {
        for (int dj = -reach; dj <= reach; ++dj) {
            const bool inside = obj.shape == Shape::cube
                                    ? true
                                    : static_cast<double>(di * di + dj * dj) <= rpx * rpx;
            if (inside) {
                pixels.push_back({ci + di, cj + dj});
            }
        }
    }
    return pixels;
}

namespace {

void
validate_object(const SceneObject &o, const RasterSpec &spec) {
    if (!(o.radius > 0.0) || !(o.height > 0.0)) {
        fail(ErrorKind::invalid_argument,
             "object " + std::to_string(o.id) + ": radius and height must be positive");
    }
    if (spec.schema == ChannelSchema::onehot_color_shape && (o.color < 0 || o.color >= spec.n_colors)) {
        fail(ErrorKind::invalid_argument, "object " + std::to_string(o.id) + ": color index " +
                                              std::to_string(o.color) + " outside palette");
    }
}

} // namespace

BevMap
rasterize(const std::vector<SceneObject> &objects, const RasterSpec &spec) {
    const int c = spec.channels();
    std::vector<float> grid(static_cast<std::size_t>(spec.h) * spec.w * c, 0.0f);
    const int m = spec.margin_px;
    for (const auto &o : objects) {
        validate_object(o, spec);
        for (const auto &[r, col] : footprint_pixels(o, spec.world_to_grid)) {
            if (r < m || r >= spec.h - m || col < m || col >= spec.w - m) {
                fail(ErrorKind::out_of_range,
                     "object " + std::to_string(o.id) + " footprint intersects the margin band at (" +
                         std::to_string(r) + ", " + std::to_string(col) + ")");
            }
            float *px = &grid[(static_cast<std::size_t>(r) * spec.w + col) * c];
            std::fill(px, px + c, 0.0f);
            if (spec.schema == ChannelSchema::occupancy) {
                px[0] = 1.0f;
            } else {
                px[o.color]                                   = 1.0f;
                px[spec.n_colors + static_cast<int>(o.shape)] = 1.0f;
            }
        }
    }
    return BevMap(spec, std::move(grid), objects);
}

SceneSampling
sampling_inside_margin(const RasterSpec &spec) {
    SceneSampling s;
    const auto &t = spec.world_to_grid;
    s.x0          = t.world_x(spec.margin_px);
    s.x1          = t.world_x(spec.w - spec.margin_px);
    s.y0          = t.world_y(spec.margin_px);
    s.y1          = t.world_y(spec.h - spec.margin_px);
    return s;
}

std::vector<SceneObject>
sample_scene(std::uint64_t seed, int n_min, int n_max, const Palette &palette,
             const SceneSampling &sampling) {
    if (n_min < 0 || n_min > n_max) {
        fail(ErrorKind::invalid_argument, "sample_scene requires 0 <= n_min <= n_max");
    }
    if (palette.size() < 1) {
        fail(ErrorKind::invalid_argument, "sample_scene requires a non-empty palette");
    }
    Rng rng(seed);
    const int count = rng.uniform_int(n_min, n_max);
    const double q  = sampling.quantum;
    auto snap       = [q](double v) { return std::round(v / q) * q; };

    std::vector<SceneObject> objects;
    int attempts = 0;
    while (static_cast<int>(objects.size()) < count) {
        if (++attempts > sampling.attempt_budget) {
            fail(ErrorKind::out_of_range, "sample_scene: rejection budget exhausted for seed " +
                                              std::to_string(seed) + " placing " +
                                              std::to_string(count) + " objects");
        }
        SceneObject o;
        o.id     = static_cast<int>(objects.size());
        o.shape  = static_cast<Shape>(rng.uniform_int(0, kShapeCount - 1));
        o.color  = rng.uniform_int(0, palette.size() - 1);
        o.radius = snap(rng.uniform(sampling.radius_min, sampling.radius_max));
        o.height = snap(rng.uniform(sampling.height_min, sampling.height_max));
        // Keep the footprint strictly inside [x0, x1) so its pixels stay in range.
        const double lo_x = sampling.x0 + o.radius;
        const double hi_x = sampling.x1 - o.radius - q;
        const double lo_y = sampling.y0 + o.radius;
        const double hi_y = sampling.y1 - o.radius - q;
        if (hi_x < lo_x || hi_y < lo_y) {
            continue;
        }
        o.cx = std::clamp(snap(rng.uniform(lo_x, hi_x)), std::ceil(lo_x / q) * q, hi_x);
        o.cy = std::clamp(snap(rng.uniform(lo_y, hi_y)), std::ceil(lo_y / q) * q, hi_y);

        auto bound = [](const SceneObject &s) {
            return s.shape == Shape::cube ? s.radius * std::sqrt(2.0) : s.radius;
        };
        const bool clear = std::all_of(objects.begin(), objects.end(), [&](const SceneObject &p) {
            const double d = std::hypot(o.cx - p.cx, o.cy - p.cy);
            return d >= (1.0 - sampling.max_overlap) * (bound(o) + bound(p)) + sampling.min_gap;
        });
        if (clear) {
            objects.push_back(o);
        }
    }
    return objects;
}

BevMap
crop_window(const BevMap &b, const WindowSpec &w) {
    if (w.h < 1 || w.w < 1 || w.row < 0 || w.col < 0 || w.row + w.h > b.height() ||
        w.col + w.w > b.width()) {
        fail(ErrorKind::out_of_range, "window (row " + std::to_string(w.row) + ", col " +
                                          std::to_string(w.col) + ", " + std::to_string(w.h) +
                                          "x" + std::to_string(w.w) + ") outside map " +
                                          std::to_string(b.height()) + "x" +
                                          std::to_string(b.width()));
    }
    RasterSpec spec = b.spec();
    spec.h          = w.h;
    spec.w          = w.w;
    spec.world_to_grid.offset_x -= w.col;
    spec.world_to_grid.offset_y -= w.row;
    const int edge = std::min({w.row, w.col, b.height() - (w.row + w.h), b.width() - (w.col + w.w)});
    spec.margin_px = std::clamp(b.margin_px() - edge, 0, std::min(w.h, w.w) / 2);

    const int c = b.channels();
    std::vector<float> grid(static_cast<std::size_t>(w.h) * w.w * c);
    for (int r = 0; r < w.h; ++r) {
        const auto src = b.grid().begin() + (static_cast<std::size_t>(w.row + r) * b.width() + w.col) * c;
        std::copy(src, src + static_cast<std::ptrdiff_t>(w.w) * c,
                  grid.begin() + static_cast<std::ptrdiff_t>(r) * w.w * c);
    }

    std::vector<SceneObject> kept;
    for (const auto &o : b.objects()) {
        const auto px = footprint_pixels(o, b.world_to_grid());
        const bool hit = std::any_of(px.begin(), px.end(), [&](const auto &p) {
            return p[0] >= w.row && p[0] < w.row + w.h && p[1] >= w.col && p[1] < w.col + w.w;
        });
        if (hit) {
            kept.push_back(o);
        }
    }
    return BevMap(spec, std::move(grid), std::move(kept));
}

BevMap
translate(const BevMap &b, int dx, int dy) {
    if (std::abs(dx) > b.margin_px() || std::abs(dy) > b.margin_px()) {
        fail(ErrorKind::out_of_range, "shift (" + std::to_string(dx) + ", " + std::to_string(dy) +
                                          ") exceeds margin " + std::to_string(b.margin_px()));
    }
    const int h = b.height();
    const int w = b.width();
    const int c = b.channels();
    std::vector<float> grid(b.grid().size(), 0.0f);
    for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) {
            const int tr      = r + dy;
            const int tc      = col + dx;
            const bool inside = tr >= 0 && tr < h && tc >= 0 && tc < w;
            for (int k = 0; k < c; ++k) {
                const float v = b.at(r, col, k);
                if (v == 0.0f) {
                    continue;
                }
                if (!inside) {
                    fail(ErrorKind::out_of_range, "shift would clip content at pixel (" +
                                                      std::to_string(r) + ", " +
                                                      std::to_string(col) + ")");
                }
                grid[(static_cast<std::size_t>(tr) * w + tc) * c + k] = v;
            }
        }
    }
    std::vector<SceneObject> objects = b.objects();
    const double s                   = b.world_to_grid().scale;
    for (auto &o : objects) {
        o.cx += dx / s;
        o.cy += dy / s;
    }
    return BevMap(b.spec(), std::move(grid), std::move(objects));
}

BevMap
apply_edit(const BevMap &b, const Edit &edit) {
    if (b.objects().empty() && b.nonzero_pixels() > 0) {
        fail(ErrorKind::invalid_argument, "map has raw content and no object list to edit");
    }
    std::vector<SceneObject> objects = b.objects();
    auto locate                      = [&](int id) {
        const auto it =
            std::find_if(objects.begin(), objects.end(), [id](const auto &o) { return o.id == id; });
        if (it == objects.end()) {
            fail(ErrorKind::not_found, "unknown object id " + std::to_string(id));
        }
        return it;
    };
    const double s = b.world_to_grid().scale;

    std::visit(
        [&](const auto &e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, InsertEdit>) {
                SceneObject o = e.object;
                if (o.id < 0) {
                    int next = 0;
                    for (const auto &p : objects) {
                        next = std::max(next, p.id + 1);
                    }
                    o.id = next;
                } else if (b.find(o.id) != nullptr) {
                    fail(ErrorKind::invalid_argument, "object id " + std::to_string(o.id) +
                                                          " already exists");
                }
                objects.push_back(o);
            } else if constexpr (std::is_same_v<T, RemoveEdit>) {
                objects.erase(locate(e.id));
            } else if constexpr (std::is_same_v<T, MoveEdit>) {
                auto it = locate(e.id);
                it->cx += e.dx / s;
                it->cy += e.dy / s;
            } else {
                auto it = locate(e.id);
                if (e.color) {
                    it->color = *e.color;
                }
                if (e.shape) {
                    it->shape = *e.shape;
                }
            }
        },
        edit);
    return rasterize(objects, b.spec());
}

nlohmann::json
to_json(const SceneObject &o) {
    return {{"id", o.id},
            {"shape", to_string(o.shape)},
            {"color", o.color},
            {"center", {o.cx, o.cy}},
            {"footprint_radius", o.radius},
            {"height", o.height}};
}

SceneObject
object_from_json(const nlohmann::json &j) {
    try {
        SceneObject o;
        o.id     = j.value("id", -1);
        o.shape  = shape_from_string(j.at("shape").get<std::string>());
        o.color  = j.value("color", 0);
        o.cx     = j.at("center").at(0).get<double>();
        o.cy     = j.at("center").at(1).get<double>();
        o.radius = j.at("footprint_radius").get<double>();
        o.height = j.at("height").get<double>();
        return o;
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed object: ") + e.what());
    }
}

Edit
edit_from_json(const nlohmann::json &j) {
    try {
        const std::string op = j.at("op").get<std::string>();
        if (op == "insert") {
            return InsertEdit{object_from_json(j.at("object"))};
        }
        if (op == "remove") {
            return RemoveEdit{j.at("id").get<int>()};
        }
        if (op == "move") {
            return MoveEdit{j.at("id").get<int>(), j.at("delta").at(0).get<double>(),
                            j.at("delta").at(1).get<double>()};
        }
        if (op == "restyle") {
            RestyleEdit e{j.at("id").get<int>(), std::nullopt, std::nullopt};
            if (j.contains("color")) {
                e.color = j.at("color").get<int>();
            }
            if (j.contains("shape")) {
                e.shape = shape_from_string(j.at("shape").get<std::string>());
            }
            return e;
        }
        fail(ErrorKind::invalid_argument, "unknown edit op '" + op + "'");
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed edit: ") + e.what());
    }
}

nlohmann::json
bev_header(const BevMap &b) {
    const auto &t = b.world_to_grid();
    nlohmann::json objects = nlohmann::json::array();
    for (const auto &o : b.objects()) {
        objects.push_back(to_json(o));
    }
    return {{"h", b.height()},
            {"w", b.width()},
            {"c", b.channels()},
            {"schema", to_string(b.schema())},
            {"n_colors", b.spec().n_colors},
            {"world_to_grid", {{"scale", t.scale}, {"offset", {t.offset_x, t.offset_y}}}},
            {"margin_px", b.margin_px()},
            {"objects", objects}};
}

std::vector<std::uint8_t>
encode_bev(const BevMap &b) {
    return encode_container("BEVMAP01", bev_header(b), b.grid());
}

BevMap
decode_bev(std::span<const std::uint8_t> bytes) {
    auto c = decode_container(bytes, "BEVMAP01", [](const nlohmann::json &h) {
        return h.at("h").get<std::size_t>() * h.at("w").get<std::size_t>() *
               h.at("c").get<std::size_t>();
    });
    try {
        const auto &h = c.header;
        RasterSpec spec;
        spec.schema                 = schema_from_string(h.at("schema").get<std::string>());
        spec.h                      = h.at("h").get<int>();
        spec.w                      = h.at("w").get<int>();
        spec.n_colors               = h.value("n_colors", h.at("c").get<int>() - kShapeCount);
        spec.margin_px              = h.at("margin_px").get<int>();
        spec.world_to_grid.scale    = h.at("world_to_grid").at("scale").get<double>();
        spec.world_to_grid.offset_x = h.at("world_to_grid").at("offset").at(0).get<double>();
        spec.world_to_grid.offset_y = h.at("world_to_grid").at("offset").at(1).get<double>();
        if (spec.channels() != h.at("c").get<int>()) {
            fail(ErrorKind::invalid_argument, "channel count does not match schema");
        }
        std::vector<SceneObject> objects;
        for (const auto &o : h.at("objects")) {
            objects.push_back(object_from_json(o));
        }
        return BevMap(spec, std::move(c.payload), std::move(objects));
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed .bev header: ") + e.what());
    }
}

void
save_bev(const BevMap &b, const std::string &path) {
    write_file(path, encode_bev(b));
}

BevMap
load_bev(const std::string &path) {
    return decode_bev(read_file(path));
}

} // namespace bevfield
