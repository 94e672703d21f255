// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/renderer.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace bevfield {
namespace {

Camera
test_camera(double f_norm = 1.0) {
    return Camera::look_at({0.0, -6.0, 3.0}, {0.0, 0.0, 0.5}, {0.0, 0.0, 1.0}, f_norm, 0.5, 14.0);
}

SampleBatch
batch(std::vector<double> sigmas, std::vector<double> deltas, std::vector<std::array<double, 3>> colors) {
    SampleBatch b;
    b.points.resize(sigmas.size());
    b.sigmas = std::move(sigmas);
    b.deltas = std::move(deltas);
    b.colors = std::move(colors);
    return b;
}

double
image_distance(const Image &a, const Image &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    }
    return std::sqrt(s);
}

TEST(Camera, CenterPixelLooksDownTheAxis) {
    const Camera cam = test_camera(1.7);
    const auto rays  = make_rays(cam, 9, 7);
    const Ray &c     = rays[3 * 9 + 4];
    EXPECT_NEAR(c.dir.x, cam.forward.x, 1e-12);
    EXPECT_NEAR(c.dir.y, cam.forward.y, 1e-12);
    EXPECT_NEAR(c.dir.z, cam.forward.z, 1e-12);
    for (const Ray &r : rays) {
        EXPECT_NEAR(norm(r.dir), 1.0, 1e-9);
    }
}

TEST(Camera, HorizontalHalfFovIsArctanOfInverseFocal) {
    for (double f : {0.5, 1.0, 2.5}) {
        const Camera cam = test_camera(f);
        const Ray edge   = ray_through(cam, 64, 48, 64.0, 24.0);
        const double ang = std::acos(std::clamp(dot(edge.dir, cam.forward), -1.0, 1.0));
        EXPECT_NEAR(ang, std::atan(1.0 / f), 1e-12) << f;
    }
}

TEST(Camera, ValidationAndJson) {
    Camera cam = test_camera();
    EXPECT_NO_THROW(cam.validate());
    const Camera back = camera_from_json(to_json(cam));
    EXPECT_EQ(back.position, cam.position);
    EXPECT_EQ(back.forward, cam.forward);
    EXPECT_EQ(back.f_norm, cam.f_norm);
    cam.near = 20.0;
    EXPECT_THROW(cam.validate(), Error);
    cam       = test_camera();
    cam.right = {1.0, 1.0, 0.0};
    EXPECT_THROW(cam.validate(), Error);
    EXPECT_THROW(Camera::look_at({0, 0, 5}, {0, 0, 0}, {0, 0, 1}, 1.0, 0.1, 10.0), Error);
}

TEST(Camera, OrthographicRaysAreParallel) {
    const Camera cam = Camera::top_down(10.0, 20.0, 9.0, 8.0, 0.5, 12.0);
    const auto rays  = make_rays(cam, 16, 16);
    EXPECT_EQ(rays[0].dir, (Vec3{0.0, 0.0, -1.0}));
    // Pixel (0, 0) centers half a pitch inside the left and top edges.
    EXPECT_DOUBLE_EQ(rays[0].origin.x, 10.0 - 8.0 + 0.5);
    EXPECT_DOUBLE_EQ(rays[0].origin.y, 20.0 - 8.0 + 0.5);
}

TEST(SampleAlong, SingleSampleIsTheMidpoint) {
    const RaySamples s = sample_along(1.0, 3.0, 1);
    ASSERT_EQ(s.ts.size(), 1u);
    EXPECT_DOUBLE_EQ(s.ts[0], 2.0);
    EXPECT_DOUBLE_EQ(s.deltas[0], 2.0);
}

TEST(SampleAlong, DeltasSumAndJitterStaysInBins) {
    for (int n : {3, 32, 64}) {
        const RaySamples s = sample_along(0.5, 14.0, n, 42);
        double sum         = 0.0;
        for (int i = 0; i < n; ++i) {
            sum += s.deltas[i];
            const double lo = 0.5 + i * 13.5 / n;
            EXPECT_GE(s.ts[i], lo - 1e-12);
            EXPECT_LE(s.ts[i], lo + 13.5 / n + 1e-12);
        }
        EXPECT_NEAR(sum, 13.5, 1e-9);
        EXPECT_EQ(sample_along(0.5, 14.0, n, 42).ts, s.ts);
        EXPECT_NE(sample_along(0.5, 14.0, n, 43).ts, s.ts);
    }
    EXPECT_THROW(sample_along(1.0, 1.0, 4), Error);
    EXPECT_THROW(sample_along(0.0, 1.0, 0), Error);
}

TEST(Composite, EmptyDensityIsBlackWithZeroWeights) {
    const auto r = composite(batch({0.0, 0.0, 0.0}, {0.2, 0.2, 0.2}, {{1, 1, 1}, {1, 0, 0}, {0, 1, 0}}));
    EXPECT_EQ(r.color, (std::array<double, 3>{0.0, 0.0, 0.0}));
    for (double w : r.weights) {
        EXPECT_EQ(w, 0.0);
    }
}

TEST(Composite, OpaqueFirstSampleWins) {
    const auto r = composite(batch({1e6, 3.0}, {0.5, 0.5}, {{0.2, 0.4, 0.6}, {1, 1, 1}}));
    EXPECT_NEAR(r.weights[0], 1.0, 1e-12);
    EXPECT_NEAR(r.weights[1], 0.0, 1e-12);
    EXPECT_NEAR(r.color[2], 0.6, 1e-12);
}

TEST(Composite, TwoSampleClosedForm) {
    const auto r = composite(batch({1.0, 2.0}, {0.5, 0.5}, {{1, 0, 0}, {0, 1, 0}}));
    EXPECT_NEAR(r.color[0], 1.0 - std::exp(-0.5), 1e-12);
    EXPECT_NEAR(r.color[1], std::exp(-0.5) * (1.0 - std::exp(-1.0)), 1e-12);
    EXPECT_NEAR(r.color[2], 0.0, 1e-12);
}

TEST(Composite, MatchesSequentialOracle) {
    Rng rng(2024);
    for (int t = 0; t < 1000; ++t) {
        const SampleBatch b = oracle::random_batch(rng);
        const auto got      = composite(b);
        const auto ref      = oracle::sequential_composite(b);
        for (int k = 0; k < 3; ++k) {
            ASSERT_NEAR(got.color[k], ref[k], 1e-6) << t;
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < b.sigmas.size(); ++i) {
            ASSERT_GE(got.weights[i], 0.0);
            ASSERT_LE(got.weights[i], 1.0);
            if (i > 0) {
                ASSERT_LE(got.transmittance[i], got.transmittance[i - 1]);
            }
            sum += got.weights[i];
        }
        ASSERT_LE(sum, 1.0 + 1e-9);
        // The span variant agrees with the batch variant.
        std::vector<FieldSample> fs;
        for (std::size_t i = 0; i < b.sigmas.size(); ++i) {
            fs.push_back({b.colors[i], b.sigmas[i]});
        }
        const auto fast = composite(fs, b.deltas, {});
        for (int k = 0; k < 3; ++k) {
            ASSERT_NEAR(fast[k], got.color[k], 1e-12);
        }
    }
}

TEST(Composite, SubdividingAConstantIntervalChangesNothing) {
    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
        const SampleBatch b = oracle::random_batch(rng, 16);
        SampleBatch split;
        for (std::size_t i = 0; i < b.sigmas.size(); ++i) {
            for (int h = 0; h < 2; ++h) {
                split.points.push_back(b.points[i]);
                split.sigmas.push_back(b.sigmas[i]);
                split.deltas.push_back(0.5 * b.deltas[i]);
                split.colors.push_back(b.colors[i]);
            }
        }
        const auto a = composite(b).color, s = composite(split).color;
        for (int k = 0; k < 3; ++k) {
            ASSERT_NEAR(a[k], s[k], 1e-9);
        }
    }
}

TEST(Composite, BackgroundFillsRemainingTransmittance) {
    CompositeOptions opts;
    opts.background = {0.0, 0.0, 1.0};
    const auto r    = composite(batch({2.0}, {0.5}, {{1, 0, 0}}), opts);
    EXPECT_NEAR(r.color[0], 1.0 - std::exp(-1.0), 1e-12);
    EXPECT_NEAR(r.color[2], std::exp(-1.0), 1e-12);
}

TEST(Composite, PaperExactFlagIncludesTheCurrentSample) {
    CompositeOptions opts;
    opts.paper_exact_compositing = true;
    const auto r = composite(batch({1.0, 2.0}, {0.5, 0.5}, {{1, 0, 0}, {0, 1, 0}}), opts);
    EXPECT_NEAR(r.color[0], std::exp(-0.5) * (1.0 - std::exp(-0.5)), 1e-12);
    EXPECT_NEAR(r.color[1], std::exp(-1.5) * (1.0 - std::exp(-1.0)), 1e-12);
}

TEST(Render, ConstantFieldGivesConstantImage) {
    const oracle::ConstantField field(0.7, {0.3, 0.6, 0.9});
    RenderSettings s;
    s.width = s.height = 12;
    s.n_samples        = 16;
    const Camera cam   = test_camera();
    const Image one    = render(field, cam, s);
    // Every ray crosses the same optical depth.
    const double expected = 0.6 * (1.0 - std::exp(-0.7 * (cam.far - cam.near)));
    for (int i = 0; i < 12; ++i) {
        for (int j = 0; j < 12; ++j) {
            ASSERT_NEAR(one.at(i, j, 1), expected, 1e-12);
        }
    }
    s.ssaa          = 2;
    const Image two = render(field, cam, s);
    ASSERT_EQ(two.height(), 12);
    for (std::size_t i = 0; i < one.size(); ++i) {
        ASSERT_NEAR(two.data()[i], one.data()[i], 1e-6);
    }
}

TEST(Render, DeterministicIncludingJitter) {
    const auto field = procedural_field({{0, Shape::sphere, 2, 0.0, 0.0, 1.0, 2.0}}, Palette::clevr());
    RenderSettings s;
    s.width = s.height = 16;
    s.n_samples        = 24;
    s.jitter_seed      = 5;
    EXPECT_EQ(render(*field, test_camera(), s), render(*field, test_camera(), s));
    set_thread_count(1);
    const Image serial = render(*field, test_camera(), s);
    set_thread_count(0);
    EXPECT_EQ(serial, render(*field, test_camera(), s));
}

TEST(Render, RejectsBadSettings) {
    const oracle::ConstantField field(0.0, {0, 0, 0});
    RenderSettings s;
    s.ssaa = 0;
    EXPECT_THROW(render(field, test_camera(), s), Error);
    s.ssaa  = 1;
    s.width = 0;
    EXPECT_THROW(render(field, test_camera(), s), Error);
}

TEST(Render, SupersamplingReducesCheckerAliasing) {
    ProceduralOptions opts;
    opts.checker        = true;
    opts.checker_period = 0.37; // below the pixel pitch of 1 world unit
    const auto field    = procedural_field({}, Palette::clevr(), opts);
    const Camera cam    = Camera::top_down(0.0, 0.0, 2.0, 8.0, 0.5, 4.0);
    RenderSettings s;
    s.width = s.height = 16;
    s.n_samples        = 16;
    auto at            = [&](int k) {
        s.ssaa = k;
        return render(*field, cam, s);
    };
    const Image ref = at(16);
    EXPECT_LT(image_distance(at(4), ref), image_distance(at(1), ref));
}

TEST(Procedural, EmptySceneIsGroundOnly) {
    ProceduralOptions opts;
    const auto field = procedural_field({}, Palette::clevr(), opts);
    EXPECT_EQ(field->query({3.0, 4.0, 2.0}, {0, 0, 1}).sigma, 0.0);
    EXPECT_NEAR(field->query({3.0, 4.0, -1.0}, {0, 0, 1}).sigma, opts.sigma_max, 1e-12);
    // A ray pointing up never meets the ground and stays black.
    const Camera up = Camera::look_at({0, 0, 1}, {0, 0.01, 5}, {0, 1, 0}, 1.0, 0.1, 5.0);
    RenderSettings s;
    s.width = s.height = 4;
    const Image img    = render(*field, up, s);
    for (double v : img.data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Procedural, SphereCenterIsSaturated) {
    ProceduralOptions opts;
    opts.ground      = false;
    const auto field = procedural_field({{0, Shape::sphere, 3, 2.0, 5.0, 1.5, 3.0}}, Palette::clevr(), opts);
    const FieldSample s = field->query({2.0, 5.0, 1.5}, {0, 0, 1});
    EXPECT_NEAR(s.sigma, opts.sigma_max, 1e-9);
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(s.color[k], Palette::clevr().colors[3][k], 1e-12);
    }
}

TEST(Procedural, SdfSignsPerShape) {
    const SceneObject c{0, Shape::cube, 0, 0.0, 0.0, 1.0, 2.0};
    EXPECT_NEAR(object_sdf(c, {0.0, 0.0, 1.0}), -1.0, 1e-12);
    EXPECT_NEAR(object_sdf(c, {2.0, 0.0, 1.0}), 1.0, 1e-12);
    const SceneObject y{0, Shape::cylinder, 0, 0.0, 0.0, 1.0, 4.0};
    EXPECT_NEAR(object_sdf(y, {0.0, 0.0, 2.0}), -1.0, 1e-12);
    EXPECT_NEAR(object_sdf(y, {0.0, 0.0, 5.0}), 1.0, 1e-12);
    const SceneObject s{0, Shape::sphere, 0, 0.0, 0.0, 1.0, 2.0};
    EXPECT_NEAR(object_sdf(s, {0.0, 3.0, 1.0}), 2.0, 1e-12);
}

TEST(Procedural, TranslatedSceneAndQueryAgreeExactly) {
    const std::vector<SceneObject> objs{{0, Shape::sphere, 1, 1.25, 2.5, 1.0, 2.0},
                                        {1, Shape::cube, 4, -2.0, 0.75, 0.875, 1.5}};
    const auto base = procedural_field(objs, Palette::clevr());
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const double tx = rng.uniform_int(-20, 20), ty = rng.uniform_int(-20, 20);
        auto moved      = objs;
        for (auto &o : moved) {
            o.cx += tx;
            o.cy += ty;
        }
        const auto f = procedural_field(moved, Palette::clevr());
        const Vec3 p{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-0.5, 3)};
        const FieldSample a = base->query(p, {0, 0, 1});
        const FieldSample b = f->query(p + Vec3{tx, ty, 0.0}, {0, 0, 1});
        // Anchored queries remove the rounding of the absolute coordinates.
        const FieldSample c = f->query_at(Vec3{tx, ty, 0.0}, p, {0, 0, 1});
        EXPECT_EQ(a.sigma, c.sigma);
        EXPECT_EQ(a.color, c.color);
        EXPECT_NEAR(a.sigma, b.sigma, 1e-6);
    }
}

TEST(Procedural, RenderIsCovariantWithSceneTranslation) {
    const std::vector<SceneObject> objs{{0, Shape::sphere, 1, 1.25, 2.5, 1.0, 2.0},
                                        {1, Shape::cylinder, 5, -1.0, -0.5, 0.75, 1.5}};
    RenderSettings s;
    s.width = s.height = 24;
    s.n_samples        = 32;
    const Camera cam   = Camera::look_at({0.0, -7.0, 4.0}, {0.0, 0.0, 0.5}, {0, 0, 1}, 1.2, 0.5, 16.0);
    const Image base   = render(*procedural_field(objs, Palette::clevr()), cam, s);
    for (Vec3 t : {Vec3{3, 0, 0}, Vec3{-5, 7, 0}, Vec3{16, -16, 0}}) {
        auto moved = objs;
        for (auto &o : moved) {
            o.cx += t.x;
            o.cy += t.y;
        }
        EXPECT_EQ(render(*procedural_field(moved, Palette::clevr()), cam.translated(t), s), base);
    }
}

} // namespace
} // namespace bevfield
