// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/renderer.hpp"

#include "bevfield/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bevfield {

namespace {

nlohmann::json
vec_json(const Vec3 &v) {
    return nlohmann::json::array({v.x, v.y, v.z});
}

Vec3
vec_from_json(const nlohmann::json &j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

double
smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

} // namespace

Camera
Camera::look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &world_up, double f_norm,
                double near, double far) {
    Camera c;
    c.projection = Projection::pinhole;
    c.position   = eye;
    c.forward    = normalized(target - eye);
    const Vec3 r = cross(c.forward, world_up);
    if (norm(r) < 1e-12) {
        fail(ErrorKind::invalid_argument, "look_at: up vector parallel to the view direction");
    }
    c.right  = normalized(r);
    c.down   = cross(c.forward, c.right);
    c.f_norm = f_norm;
    c.near   = near;
    c.far    = far;
    c.validate();
    return c;
}

Camera
Camera::top_down(double cx, double cy, double z_top, double half_width, double near, double far) {
    Camera c;
    c.projection = Projection::orthographic;
    c.position   = {cx, cy, z_top};
    c.right      = {1.0, 0.0, 0.0};
    c.down       = {0.0, 1.0, 0.0};
    c.forward    = {0.0, 0.0, -1.0};
    c.half_width = half_width;
    c.near       = near;
    c.far        = far;
    c.validate();
    return c;
}

Camera
Camera::translated(const Vec3 &t) const {
    Camera c   = *this;
    c.position = position + t;
    return c;
}

void
Camera::validate() const {
    auto unit = [](const Vec3 &v) { return std::abs(norm(v) - 1.0) < 1e-9; };
    if (!unit(right) || !unit(down) || !unit(forward) || std::abs(dot(right, down)) > 1e-9 ||
        std::abs(dot(right, forward)) > 1e-9 || std::abs(dot(down, forward)) > 1e-9) {
        fail(ErrorKind::invalid_argument, "camera frame is not orthonormal");
    }
    if (!(near > 0.0 && near < far)) {
        fail(ErrorKind::invalid_argument, "camera needs 0 < near < far");
    }
    if (projection == Projection::pinhole && !(f_norm > 0.0)) {
        fail(ErrorKind::invalid_argument, "camera f_norm must be positive");
    }
    if (projection == Projection::orthographic && !(half_width > 0.0)) {
        fail(ErrorKind::invalid_argument, "orthographic half_width must be positive");
    }
}

nlohmann::json
to_json(const Camera &c) {
    return {{"projection", c.projection == Projection::pinhole ? "pinhole" : "orthographic"},
            {"position", vec_json(c.position)},
            {"right", vec_json(c.right)},
            {"down", vec_json(c.down)},
            {"forward", vec_json(c.forward)},
            {"f_norm", c.f_norm},
            {"half_width", c.half_width},
            {"near", c.near},
            {"far", c.far}};
}

Camera
camera_from_json(const nlohmann::json &j) {
    Camera c;
    try {
        const auto proj = j.value("projection", std::string("pinhole"));
        if (proj == "pinhole") {
            c.projection = Projection::pinhole;
        } else if (proj == "orthographic") {
            c.projection = Projection::orthographic;
        } else {
            fail(ErrorKind::invalid_argument, "unknown projection '" + proj + "'");
        }
        if (j.contains("position")) {
            c.position = vec_from_json(j.at("position"));
        }
        if (j.contains("right")) {
            c.right = vec_from_json(j.at("right"));
        }
        if (j.contains("down")) {
            c.down = vec_from_json(j.at("down"));
        }
        if (j.contains("forward")) {
            c.forward = vec_from_json(j.at("forward"));
        }
        c.f_norm     = j.value("f_norm", c.f_norm);
        c.half_width = j.value("half_width", c.half_width);
        c.near       = j.value("near", c.near);
        c.far        = j.value("far", c.far);
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("camera: ") + e.what());
    }
    c.validate();
    return c;
}

Ray
ray_through(const Camera &cam, int W, int H, double px, double py) {
    if (cam.projection == Projection::orthographic) {
        const double pitch = 2.0 * cam.half_width / W;
        const double a     = (px - 0.5 * W) * pitch;
        const double b     = (py - 0.5 * H) * pitch;
        return {cam.position + cam.right * a + cam.down * b, cam.forward};
    }
    const double u  = 2.0 * px / W - 1.0;
    const double v  = 2.0 * py / H - 1.0;
    const double dx = u / cam.f_norm;
    const double dy = v / cam.f_norm * (static_cast<double>(H) / W);
    const Vec3 d    = cam.right * dx + cam.down * dy + cam.forward;
    return {cam.position, normalized(d)};
}

std::vector<Ray>
make_rays(const Camera &cam, int W, int H) {
    if (W < 1 || H < 1) {
        fail(ErrorKind::invalid_argument, "image dims must be positive");
    }
    std::vector<Ray> rays;
    rays.reserve(static_cast<std::size_t>(W) * H);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            rays.push_back(ray_through(cam, W, H, j + 0.5, i + 0.5));
        }
    }
    return rays;
}

RaySamples
sample_along(double near, double far, int n, std::optional<std::uint64_t> jitter_seed) {
    if (n < 1) {
        fail(ErrorKind::invalid_argument, "need at least one sample per ray");
    }
    if (!(far > near)) {
        fail(ErrorKind::invalid_argument, "sample range needs far > near");
    }
    RaySamples s;
    s.ts.resize(n);
    s.deltas.assign(n, (far - near) / n);
    const double width = (far - near) / n;
    std::optional<Rng> rng;
    if (jitter_seed) {
        rng.emplace(*jitter_seed);
    }
    for (int i = 0; i < n; ++i) {
        const double u = rng ? rng->uniform() : 0.5;
        s.ts[i]        = near + (i + u) * width;
    }
    return s;
}

SampleBatch
sample_batch(const RadianceField &field, const Ray &ray, double near, double far, int n,
             std::optional<std::uint64_t> jitter_seed) {
    const RaySamples rs = sample_along(near, far, n, jitter_seed);
    std::vector<FieldSample> fs(n);
    field.query_ray(ray.origin, ray.dir, rs.ts, fs);
    SampleBatch b;
    b.deltas = rs.deltas;
    for (int i = 0; i < n; ++i) {
        b.points.push_back(ray.origin + ray.dir * rs.ts[i]);
        b.colors.push_back(fs[i].color);
        b.sigmas.push_back(fs[i].sigma);
    }
    return b;
}

CompositeResult
composite(const SampleBatch &batch, const CompositeOptions &opts) {
    const std::size_t n = batch.sigmas.size();
    if (batch.deltas.size() != n || batch.colors.size() != n) {
        fail(ErrorKind::invalid_argument, "sample batch arrays differ in length");
    }
    CompositeResult r;
    r.weights.resize(n);
    r.transmittance.resize(n);
    double T   = 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double tau   = batch.sigmas[i] * batch.deltas[i];
        const double alpha = -std::expm1(-tau);
        if (opts.paper_exact_compositing) {
            T *= std::exp(-tau);
        }
        r.transmittance[i] = T;
        r.weights[i]       = T * alpha;
        if (!opts.paper_exact_compositing) {
            T *= std::exp(-tau);
        }
        for (int k = 0; k < 3; ++k) {
            r.color[k] += r.weights[i] * batch.colors[i][k];
        }
        sum += r.weights[i];
    }
    for (int k = 0; k < 3; ++k) {
        r.color[k] += (1.0 - sum) * opts.background[k];
    }
    return r;
}

std::array<double, 3>
composite(std::span<const FieldSample> samples, std::span<const double> deltas,
          const CompositeOptions &opts) {
    std::array<double, 3> c{};
    double T   = 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double tau   = samples[i].sigma * deltas[i];
        const double alpha = -std::expm1(-tau);
        if (opts.paper_exact_compositing) {
            T *= std::exp(-tau);
        }
        const double w = T * alpha;
        if (!opts.paper_exact_compositing) {
            T *= std::exp(-tau);
        }
        for (int k = 0; k < 3; ++k) {
            c[k] += w * samples[i].color[k];
        }
        sum += w;
    }
    for (int k = 0; k < 3; ++k) {
        c[k] += (1.0 - sum) * opts.background[k];
    }
    return c;
}

nlohmann::json
to_json(const RenderSettings &s) {
    nlohmann::json j = {{"width", s.width},
                        {"height", s.height},
                        {"n_samples", s.n_samples},
                        {"ssaa", s.ssaa},
                        {"paper_exact_compositing", s.compositing.paper_exact_compositing},
                        {"background", s.compositing.background},
                        {"lowpass", {{"half_width", s.lowpass.half_width}, {"beta", s.lowpass.beta}}}};
    j["jitter_seed"] = s.jitter_seed ? nlohmann::json(*s.jitter_seed) : nlohmann::json(nullptr);
    return j;
}

Image
render(const RadianceField &field, const Camera &cam, const RenderSettings &settings) {
    cam.validate();
    const int W = settings.width, H = settings.height, k = settings.ssaa;
    if (W < 1 || H < 1) {
        fail(ErrorKind::invalid_argument, "image dims must be positive");
    }
    if (k < 1) {
        fail(ErrorKind::invalid_argument, "ssaa factor must be >= 1");
    }

    // Apron (output pixels) wide enough for the full anti-alias filter.
    int apron = 0;
    if (k > 1) {
        const int M = static_cast<int>(std::ceil(settings.lowpass.half_width * k - 1e-9));
        apron       = (M + k - 1) / k;
    }
    const int SW = (W + 2 * apron) * k, SH = (H + 2 * apron) * k;
    const RaySamples base = sample_along(cam.near, cam.far, settings.n_samples);

    Image sub(SH, SW, 3);
    parallel_for(0, SH, [&](int si) {
        std::vector<FieldSample> fs(settings.n_samples);
        RaySamples jittered;
        for (int sj = 0; sj < SW; ++sj) {
            const double cx = k == 1 ? sj + 0.5 : static_cast<double>(sj - apron * k) / k + 0.5;
            const double cy = k == 1 ? si + 0.5 : static_cast<double>(si - apron * k) / k + 0.5;
            const Ray ray   = ray_through(cam, W, H, cx, cy);
            const RaySamples *rs = &base;
            if (settings.jitter_seed) {
                jittered = sample_along(cam.near, cam.far, settings.n_samples,
                                        mix_seed(*settings.jitter_seed,
                                                 static_cast<std::uint64_t>(si) * SW + sj));
                rs       = &jittered;
            }
            field.query_ray(ray.origin, ray.dir, rs->ts, fs);
            const auto c = composite(fs, rs->deltas, settings.compositing);
            std::copy(c.begin(), c.end(), sub.pixel(si, sj));
        }
    });
    if (k == 1) {
        return sub;
    }
    const Image low = downsample(sub, k, true, settings.lowpass);
    Image out       = crop(low, apron, apron, H, W);
    out.set_world_to_grid({});
    return out;
}

// ---------------------------------------------------------------------------

double
object_sdf(const SceneObject &obj, const Vec3 &q) {
    const double r = obj.radius;
    switch (obj.shape) {
    case Shape::sphere: {
        const Vec3 d{q.x, q.y, q.z - r};
        return norm(d) - r;
    }
    case Shape::cylinder: {
        const double dr = std::hypot(q.x, q.y) - r;
        const double dz = std::abs(q.z - 0.5 * obj.height) - 0.5 * obj.height;
        const double ox = std::max(dr, 0.0), oz = std::max(dz, 0.0);
        return std::sqrt(ox * ox + oz * oz) + std::min(std::max(dr, dz), 0.0);
    }
    case Shape::cube: {
        const double dx = std::abs(q.x) - r;
        const double dy = std::abs(q.y) - r;
        const double dz = std::abs(q.z - 0.5 * obj.height) - 0.5 * obj.height;
        const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0), oz = std::max(dz, 0.0);
        return std::sqrt(ox * ox + oy * oy + oz * oz) + std::min(std::max({dx, dy, dz}), 0.0);
    }
    }
    return 0.0;
}

ProceduralField::ProceduralField(std::vector<SceneObject> objects, Palette palette,
                                 ProceduralOptions opts)
    : mObjects(std::move(objects)), mPalette(std::move(palette)), mOpts(opts) {
    if (!(mOpts.sigma_max > 0.0) || !(mOpts.edge_width > 0.0)) {
        fail(ErrorKind::invalid_argument, "procedural field needs positive sigma_max and edge_width");
    }
    for (const auto &o : mObjects) {
        if (o.color < 0 || o.color >= mPalette.size()) {
            fail(ErrorKind::invalid_argument,
                 "object " + std::to_string(o.id) + " color index outside the palette");
        }
        if (!(o.radius > 0.0) || !(o.height > 0.0)) {
            fail(ErrorKind::invalid_argument,
                 "object " + std::to_string(o.id) + " needs positive radius and height");
        }
    }
}

FieldSample
ProceduralField::query_at(const Vec3 &anchor, const Vec3 &offset, const Vec3 &) const {
    const double e = mOpts.edge_width;
    auto density   = [&](double sd) { return mOpts.sigma_max * (1.0 - smoothstep01((sd + e) / (2.0 * e))); };

    double sigma = 0.0;
    std::array<double, 3> acc{};
    for (const auto &o : mObjects) {
        // Relative position computed against the anchor so translating both
        // scene and camera leaves the operands unchanged.
        const Vec3 q{offset.x - (o.cx - anchor.x), offset.y - (o.cy - anchor.y), offset.z + anchor.z};
        const double reach = (o.shape == Shape::cube ? o.radius * std::numbers::sqrt2 : o.radius) + e;
        const double top   = (o.shape == Shape::sphere ? 2.0 * o.radius : o.height) + e;
        if (std::abs(q.x) > reach || std::abs(q.y) > reach || q.z > top || q.z < -e) {
            continue;
        }
        const double s = density(object_sdf(o, q));
        if (s > 0.0) {
            sigma += s;
            const auto &c = mPalette.colors[o.color];
            for (int k = 0; k < 3; ++k) {
                acc[k] += s * c[k];
            }
        }
    }
    if (mOpts.ground) {
        const double z = offset.z + anchor.z;
        const double s = density(z);
        if (s > 0.0) {
            std::array<double, 3> albedo = mOpts.ground_albedo;
            if (mOpts.checker) {
                const double x = anchor.x + offset.x, y = anchor.y + offset.y;
                const auto cell = static_cast<long long>(std::floor(x / mOpts.checker_period)) +
                                  static_cast<long long>(std::floor(y / mOpts.checker_period));
                albedo = (cell & 1) ? mOpts.checker_light : mOpts.checker_dark;
            }
            sigma += s;
            for (int k = 0; k < 3; ++k) {
                acc[k] += s * albedo[k];
            }
        }
    }
    FieldSample out;
    out.sigma = sigma;
    if (sigma > 0.0) {
        for (int k = 0; k < 3; ++k) {
            out.color[k] = std::clamp(acc[k] / sigma, 0.0, 1.0);
        }
    }
    return out;
}

std::shared_ptr<ProceduralField>
procedural_field(const std::vector<SceneObject> &objects, const Palette &palette,
                 const ProceduralOptions &opts) {
    return std::make_shared<ProceduralField>(objects, palette, opts);
}

} // namespace bevfield
