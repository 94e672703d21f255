// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/stitcher.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace bevfield {
namespace {

BevMap
global_map(int w, std::uint64_t seed, int n = 8) {
    RasterSpec s;
    s.h = 64;
    s.w = w;
    return rasterize(sample_scene(seed, n, n, Palette::clevr(), sampling_inside_margin(s)), s);
}

StitchConfig
config(int n_step) {
    StitchConfig c;
    c.n_step = n_step;
    return c;
}

Image
ramp_frame(int h, int w, double base) {
    Image img(h, w, 3);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            for (int k = 0; k < 3; ++k) {
                img.at(i, j, k) = base + 0.001 * j + 0.1 * k;
            }
        }
    }
    return img;
}

TEST(Slide, WindowCounts) {
    StitchConfig c = config(1);
    c.window_w     = 256;
    c.window_h     = 64;
    EXPECT_EQ(slide(global_map(300, 1, 3), c).size(), 45u);
    c.window_w = 300;
    c.frame_w  = 300;
    EXPECT_EQ(slide(global_map(300, 1, 3), c).size(), 1u);
    c = config(10);
    const auto wins = slide(global_map(160, 1, 3), c);
    ASSERT_EQ(wins.size(), (160u - 64u) / 10u + 1u);
    for (std::size_t k = 1; k < wins.size(); ++k) {
        // Consecutive windows overlap by window_w - n_step columns.
        EXPECT_EQ(wins[k - 1].col + wins[k - 1].w - wins[k].col, 64 - 10);
        EXPECT_EQ(wins[k].row, 0);
    }
}

TEST(Slide, WindowLargerThanMapFails) {
    StitchConfig c = config(1);
    c.window_w     = 128;
    c.frame_w      = 128;
    EXPECT_THROW(slide(global_map(100, 1, 3), c), Error);
}

TEST(Config, NlocRoundsStepOverFocal) {
    for (int n : {1, 10, 20, 30, 40}) {
        StitchConfig c = config(n);
        EXPECT_EQ(c.n_loc(), n);
        c.f_norm = 2.0;
        EXPECT_EQ(c.n_loc(), static_cast<int>(std::lround(n / 2.0)));
        c.f_norm = 0.8;
        EXPECT_EQ(c.n_loc(), static_cast<int>(std::lround(n / 0.8)));
    }
    StitchConfig c = config(10);
    c.f_norm       = 2.0;
    EXPECT_EQ(c.n_loc(), 5);
    c.f_norm = 0.1;
    EXPECT_THROW(c.validate(), Error); // n_loc = 100 > frame width
    EXPECT_THROW(config(0).validate(), Error);
    const StitchConfig back = stitch_config_from_json(to_json(config(20)));
    EXPECT_EQ(back.n_step, 20);
    EXPECT_EQ(to_json(config(20))["n_loc"], 20);
}

TEST(Stitch, CentralStripsConcatenate) {
    EXPECT_EQ(strip_start(64, 1), 31);
    EXPECT_EQ(strip_start(64, 10), 27);
    EXPECT_EQ(strip_start(63, 1), 31);
    std::vector<Image> frames;
    for (int k = 0; k < 45; ++k) {
        frames.push_back(ramp_frame(8, 64, 0.01 * k));
    }
    const StitchConfig c = config(10);
    const Image pano     = stitch(frames, c);
    EXPECT_EQ(pano.width(), 45 * 10);
    EXPECT_EQ(pano.height(), 8);
    for (int k = 0; k < 45; ++k) {
        for (int m = 0; m < 10; ++m) {
            EXPECT_EQ(pano.at(3, k * 10 + m, 1), frames[k].at(3, 27 + m, 1));
        }
    }
    EXPECT_THROW(stitch({}, c), Error);
}

TEST(Stitch, RowAxisStacksHorizontalStrips) {
    StitchConfig c = config(4);
    c.axis         = Axis::y;
    std::vector<Image> frames(3, ramp_frame(64, 5, 0.2));
    const Image pano = stitch(frames, c);
    EXPECT_EQ(pano.height(), 12);
    EXPECT_EQ(pano.width(), 5);
}

TEST(Stitch, WidthIsKTimesNlocForManyConfigs) {
    for (int n : {1, 10, 20, 30, 40}) {
        for (double f : {0.5, 1.0, 2.0}) {
            StitchConfig c = config(n);
            c.f_norm       = f;
            c.frame_h      = 4;
            if (c.n_loc() > c.frame_w) {
                continue;
            }
            const auto wins = slide(global_map(224, 2, 4), c);
            std::vector<Image> frames(wins.size(), ramp_frame(4, 64, 0.0));
            const Image pano = stitch(frames, c);
            EXPECT_EQ(pano.width(), static_cast<int>(wins.size()) * c.n_loc());
            const StitchReport r = make_report(frames, pano, c);
            EXPECT_EQ(r.K, static_cast<int>(wins.size()));
            EXPECT_EQ(r.panorama_w, pano.width());
        }
    }
}

TEST(Traverse, TopDownFramesAreShiftedCopies) {
    const BevMap g       = global_map(128, 3);
    const StitchConfig c = config(4);
    const CameraRig rig  = top_down_rig(c, g.world_to_grid());
    RenderSettings rs;
    rs.n_samples       = 16;
    const auto frames  = traverse(procedural_factory(Palette::clevr()), g, c, rig, {}, rs);
    ASSERT_EQ(frames.size(), (128u - 64u) / 4u + 1u);
    for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
        ASSERT_EQ(frames[k].width(), 64);
        double worst = 0.0;
        for (int i = 0; i < 64; ++i) {
            for (int j = 0; j + 4 < 64; ++j) {
                for (int ch = 0; ch < 3; ++ch) {
                    worst = std::max(worst, std::abs(frames[k + 1].at(i, j, ch) - frames[k].at(i, j + 4, ch)));
                }
            }
        }
        EXPECT_LT(worst, 1e-5) << k;
    }
}

TEST(Traverse, DeterministicAndReportsProgress) {
    const BevMap g       = global_map(96, 4, 4);
    const StitchConfig c = config(8);
    const CameraRig rig  = side_rig(c, g.world_to_grid());
    RenderSettings rs;
    rs.n_samples = 8;
    int calls = 0, last = -1;
    const auto a = traverse(procedural_factory(Palette::clevr()), g, c, rig, {}, rs, [&](int done, int total) {
        ++calls;
        last = done;
        EXPECT_EQ(total, 5);
    });
    const auto b = traverse(procedural_factory(Palette::clevr()), g, c, rig, {}, rs);
    EXPECT_EQ(a, b);
    EXPECT_EQ(calls, 5);
    EXPECT_EQ(last, 5);
}

TEST(Traverse, GlobalTranslationShiftsThePanorama) {
    const BevMap g       = global_map(160, 5);
    const StitchConfig c = config(4);
    const CameraRig rig  = side_rig(c, g.world_to_grid());
    RenderSettings rs;
    rs.n_samples      = 16;
    const auto f      = procedural_factory(Palette::clevr());
    const Image base  = stitch(traverse(f, g, c, rig, {}, rs), c);
    const Image moved = stitch(traverse(f, translate(g, 8, 0), c, rig, {}, rs), c);
    // Translating by 8 BEV pixels moves content by two windows of 4 strips.
    ASSERT_EQ(base.width(), moved.width());
    double worst = 0.0;
    for (int i = 0; i < base.height(); ++i) {
        for (int j = 8; j < base.width(); ++j) {
            for (int k = 0; k < 3; ++k) {
                worst = std::max(worst, std::abs(moved.at(i, j, k) - base.at(i, j - 8, k)));
            }
        }
    }
    EXPECT_EQ(worst, 0.0);
}

TEST(Serration, ZeroAgainstItselfAndGrowsWithStep) {
    const BevMap g = global_map(160, 6);
    RenderSettings rs;
    rs.n_samples = 16;
    const auto f = procedural_factory(Palette::clevr());
    auto pano    = [&](int n) {
        const StitchConfig c = config(n);
        return stitch(traverse(f, g, c, side_rig(c, g.world_to_grid()), {}, rs), c);
    };
    const Image ref = pano(1);
    EXPECT_EQ(serration_diff(ref, config(1), ref, config(1)), 0.0);
    const double d10 = serration_diff(ref, config(1), pano(10), config(10));
    const double d30 = serration_diff(ref, config(1), pano(30), config(30));
    EXPECT_GT(d10, 0.0);
    EXPECT_LE(d10, d30);
    StitchConfig wide = config(10);
    wide.f_norm       = 2.0;
    EXPECT_THROW(serration_diff(ref, config(1), ref, wide), Error);
}

TEST(Rig, JsonRoundTripAndPlacement) {
    const StitchConfig c = config(10);
    const WorldToGrid w2g{};
    const CameraRig rig  = side_rig(c, w2g);
    const CameraRig back = camera_rig_from_json(to_json(rig));
    EXPECT_EQ(back.camera.position, rig.camera.position);
    const Camera placed = place_rig(rig, w2g, {0, 12, 64, 64});
    EXPECT_DOUBLE_EQ(placed.position.x, rig.camera.position.x + 12.0);
    EXPECT_DOUBLE_EQ(placed.position.y, rig.camera.position.y);
    EXPECT_EQ(placed.forward, rig.camera.forward);
}

} // namespace
} // namespace bevfield
