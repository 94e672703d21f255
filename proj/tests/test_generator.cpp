// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/generator.hpp"
#include "bevfield/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace bevfield {
namespace {

FeatureGrid
random_grid(int h, int w, int c, std::uint64_t seed, int border = 0) {
    Rng rng(seed);
    FeatureGrid g(h, w, c);
    for (int i = border; i < h - border; ++i) {
        for (int j = border; j < w - border; ++j) {
            for (int k = 0; k < c; ++k) {
                g.at(i, j, k) = rng.uniform(-1.0, 1.0);
            }
        }
    }
    return g;
}

ConvLayer
random_conv(int k, int cin, int cout, std::uint64_t seed) {
    Rng rng(seed);
    ConvLayer l{k, cin, cout, {}, {}};
    l.weight.resize(static_cast<std::size_t>(k) * k * cin * cout);
    for (auto &w : l.weight) {
        w = static_cast<float>(rng.normal() / std::sqrt(k * k * cin));
    }
    l.bias.resize(cout);
    for (auto &b : l.bias) {
        b = static_cast<float>(rng.uniform(-0.1, 0.1));
    }
    return l;
}

DenseLayer
random_dense(int in, int out, std::uint64_t seed, double gain = 1.0) {
    Rng rng(seed);
    DenseLayer l{in, out, {}, {}};
    l.weight.resize(static_cast<std::size_t>(in) * out);
    for (auto &w : l.weight) {
        w = static_cast<float>(gain * rng.normal() / std::sqrt(in));
    }
    l.bias.assign(out, 0.1f);
    return l;
}

double
interior_shift_error(const FeatureGrid &moved, const FeatureGrid &base, int dx, int dy, int border) {
    double m = 0.0;
    for (int i = border; i < base.height() - border; ++i) {
        for (int j = border; j < base.width() - border; ++j) {
            for (int k = 0; k < base.channels(); ++k) {
                m = std::max(m, std::abs(moved.at(i + dy, j + dx, k) - base.at(i, j, k)));
            }
        }
    }
    return m;
}

GeneratorConfig
small_config() {
    GeneratorConfig c = GeneratorConfig::desk();
    c.input_res       = 32;
    c.n_levels        = 3;
    c.bottleneck_res  = 4;
    c.input_channels  = 16;
    c.hidden_channels = 8;
    c.latent_dim      = 8;
    c.lowpass.half_width = 3.0;
    return c;
}

BevMap
small_bev(std::uint64_t seed) {
    RasterSpec s;
    s.h = s.w = 32;
    s.margin_px = 8;
    return rasterize(sample_scene(seed, 2, 3, Palette::clevr(), sampling_inside_margin(s)), s);
}

TEST(Config, NamedConfigsValidate) {
    EXPECT_NO_THROW(GeneratorConfig::desk().validate());
    EXPECT_NO_THROW(GeneratorConfig::paper().validate());
    const GeneratorConfig d = GeneratorConfig::desk();
    EXPECT_EQ(d.input_res >> d.n_levels, d.bottleneck_res);
    EXPECT_EQ(d.out_channels, 32);
    EXPECT_EQ(GeneratorConfig::paper().input_res, 256);
    EXPECT_EQ(GeneratorConfig::paper().bottleneck_res, 16);
    GeneratorConfig bad = d;
    bad.bottleneck_res  = 8;
    EXPECT_THROW(bad.validate(), Error);
    EXPECT_EQ(generator_config_from_json(to_json(d)), d);
}

TEST(Config, MlpInputDimsFollowLiftMode) {
    GeneratorConfig c = GeneratorConfig::desk();
    EXPECT_EQ(c.mlp_input_dims(), 32 * 8);
    c.lift_mode = LiftMode::concat;
    EXPECT_EQ(c.mlp_input_dims(), 32 + 8);
}

TEST(Params, DeterministicInSeed) {
    const GeneratorConfig c = small_config();
    EXPECT_TRUE(init_params(c, 3) == init_params(c, 3));
    EXPECT_FALSE(init_params(c, 3) == init_params(c, 4));
    EXPECT_EQ(encode_weights(init_params(c, 3)), encode_weights(init_params(c, 3)));
}

TEST(Params, WeightFileRoundTripsBitExactly) {
    const GeneratorParams p = init_params(GeneratorConfig::desk(), 11);
    const auto bytes        = encode_weights(p);
    ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "BERFW001");
    const GeneratorParams q = decode_weights(bytes);
    EXPECT_TRUE(p == q);
    EXPECT_EQ(encode_weights(q), bytes);
    EXPECT_THROW(decode_weights(std::span(bytes.data(), bytes.size() / 2)), Error);
}

TEST(BevEncode, ZeroBevGivesConstantInterior) {
    const GeneratorParams p = init_params(small_config(), 1);
    RasterSpec s;
    s.h = s.w = 32;
    const FeatureGrid e = bev_encode(p, rasterize({}, s));
    ASSERT_EQ(e.height(), 32);
    ASSERT_EQ(e.width(), 32);
    // Two 3x3 layers reach 2 pixels into the zero padding.
    for (int k = 0; k < e.channels(); ++k) {
        for (int i = 2; i < 30; ++i) {
            for (int j = 2; j < 30; ++j) {
                ASSERT_DOUBLE_EQ(e.at(i, j, k), e.at(2, 2, k));
            }
        }
    }
}

TEST(BevEncode, TranslationEquivariantOnInterior) {
    const GeneratorParams p = init_params(small_config(), 2);
    const BevMap b          = small_bev(5);
    const FeatureGrid base  = bev_encode(p, b);
    for (int k : {-3, 2, 7}) {
        const FeatureGrid moved = bev_encode(p, translate(b, k, -k / 2));
        EXPECT_LT(interior_shift_error(moved, base, k, -k / 2, std::abs(k) + 2), 1e-5) << k;
    }
}

TEST(Sel, ZeroHeadsGiveInstanceNorm) {
    const FeatureGrid a   = random_grid(12, 10, 4, 1);
    const FeatureGrid bev = random_grid(12, 10, 3, 2);
    SelLayer zero{{3, 4, std::vector<float>(12, 0.0f), std::vector<float>(4, 0.0f)},
                  {3, 4, std::vector<float>(12, 0.0f), std::vector<float>(4, 0.0f)}};
    EXPECT_EQ(sel(a, bev, zero), instance_norm(a));
}

TEST(Sel, InstanceNormStatistics) {
    const FeatureGrid a = random_grid(20, 20, 5, 3);
    const FeatureGrid n = instance_norm(a);
    for (int k = 0; k < 5; ++k) {
        double mean = 0.0, sq = 0.0;
        for (int i = 0; i < 20; ++i) {
            for (int j = 0; j < 20; ++j) {
                mean += n.at(i, j, k);
                sq += n.at(i, j, k) * n.at(i, j, k);
            }
        }
        mean /= 400.0;
        EXPECT_NEAR(mean, 0.0, 1e-3);
        EXPECT_NEAR(std::sqrt(sq / 400.0 - mean * mean), 1.0, 1e-3);
    }
}

TEST(Sel, ConstantBevGivesAffineOfNorm) {
    const FeatureGrid a = random_grid(10, 10, 3, 4);
    FeatureGrid bev(10, 10, 2);
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            bev.at(i, j, 0) = 0.5;
            bev.at(i, j, 1) = -1.0;
        }
    }
    const SelLayer layer{random_dense(2, 3, 5), random_dense(2, 3, 6)};
    const FeatureGrid out = sel(a, bev, layer);
    const FeatureGrid n   = instance_norm(a);
    // Per channel, out = g * n + b for one (g, b) pair over the whole grid.
    for (int k = 0; k < 3; ++k) {
        const double g = (out.at(1, 1, k) - out.at(0, 0, k)) / (n.at(1, 1, k) - n.at(0, 0, k));
        const double b = out.at(0, 0, k) - g * n.at(0, 0, k);
        for (int i = 0; i < 10; ++i) {
            for (int j = 0; j < 10; ++j) {
                ASSERT_NEAR(out.at(i, j, k), g * n.at(i, j, k) + b, 1e-9);
            }
        }
    }
}

TEST(Sel, TranslationEquivariantForCompactInputs) {
    // Zero-filled shifts of compactly supported inputs keep instance statistics.
    const FeatureGrid a   = random_grid(24, 24, 3, 7, 6);
    const FeatureGrid bev = random_grid(24, 24, 2, 8, 6);
    const SelLayer layer{random_dense(2, 3, 9), random_dense(2, 3, 10)};
    const FeatureGrid base = sel(a, bev, layer);
    for (int k : {-4, 3}) {
        const FeatureGrid moved = sel(shift(a, k, k), shift(bev, k, k), layer);
        EXPECT_LT(interior_shift_error(moved, base, k, k, 5), 1e-5);
    }
}

TEST(Sel, ResolutionMismatchFails) {
    const SelLayer layer{random_dense(2, 3, 1), random_dense(2, 3, 2)};
    EXPECT_THROW(sel(random_grid(8, 8, 3, 1), random_grid(4, 4, 2, 2), layer), Error);
}

TEST(ModConv, UnitStylesAndUnitNormWeightsAreAPlainConvolution) {
    ConvLayer conv = random_conv(3, 4, 5, 1);
    for (int co = 0; co < 5; ++co) {
        double ss = 0.0;
        for (std::size_t idx = co; idx < conv.weight.size(); idx += 5) {
            ss += static_cast<double>(conv.weight[idx]) * conv.weight[idx];
        }
        for (std::size_t idx = co; idx < conv.weight.size(); idx += 5) {
            conv.weight[idx] = static_cast<float>(conv.weight[idx] / std::sqrt(ss));
        }
    }
    const FeatureGrid a = random_grid(9, 9, 4, 2);
    const std::vector<double> ones(4, 1.0);
    const FeatureGrid m = modconv(a, ones, conv);
    const FeatureGrid c = conv2d(a, conv, true);
    for (std::size_t i = 0; i < m.size(); ++i) {
        // Float weights are unit norm only to float precision.
        ASSERT_NEAR(m.data()[i], c.data()[i], 1e-6);
    }
}

TEST(ModConv, ProportionalStylesGiveIdenticalOutput) {
    const ConvLayer conv = random_conv(3, 6, 4, 3);
    const FeatureGrid a  = random_grid(10, 10, 6, 4);
    Rng rng(5);
    std::vector<double> s1(6), s2(6);
    for (int i = 0; i < 6; ++i) {
        s1[i] = rng.uniform(0.2, 2.0);
        s2[i] = 3.7 * s1[i];
    }
    const FeatureGrid o1 = modconv(a, s1, conv), o2 = modconv(a, s2, conv);
    for (std::size_t i = 0; i < o1.size(); ++i) {
        ASSERT_NEAR(o1.data()[i], o2.data()[i], 1e-6);
    }
}

TEST(ModConv, TranslationEquivariantOnInterior) {
    const ConvLayer conv = random_conv(3, 3, 3, 6);
    const FeatureGrid a  = random_grid(16, 16, 3, 7);
    const std::vector<double> style{0.5, 1.5, -0.7};
    const FeatureGrid base = modconv(a, style, conv);
    const FeatureGrid moved = modconv(shift(a, 2, -3), style, conv);
    EXPECT_LT(interior_shift_error(moved, base, 2, -3, 4), 1e-5);
}

TEST(Unet, OutputShapeAndPurity) {
    const GeneratorConfig c = small_config();
    const GeneratorParams p = init_params(c, 1);
    const BevMap b          = small_bev(1);
    const LatentCode s      = sample_latent(0, c.latent_dim);
    const FeatureGrid o     = unet_forward(p, b, s, {0, 0, 32, 32});
    EXPECT_EQ(o.height(), 32);
    EXPECT_EQ(o.width(), 32);
    EXPECT_EQ(o.channels(), 32);
    EXPECT_TRUE(o.all_finite());
    EXPECT_EQ(o, unet_forward(p, b, s, {0, 0, 32, 32}));
}

TEST(Unet, AblationSwitchesKeepShape) {
    for (int variant = 0; variant < 3; ++variant) {
        GeneratorConfig c = small_config();
        c.use_lowpass     = variant != 0;
        c.use_sel         = variant != 1;
        c.use_skips       = variant != 2;
        const GeneratorParams p = init_params(c, 1);
        const FeatureGrid o = unet_forward(p, small_bev(1), sample_latent(0, c.latent_dim), {0, 0, 32, 32});
        EXPECT_EQ(o.height(), 32);
        EXPECT_EQ(o.channels(), 32);
    }
}

TEST(Unet, RejectsMismatchedInputs) {
    const GeneratorParams p = init_params(small_config(), 1);
    EXPECT_THROW(unet_forward(p, small_bev(1), sample_latent(0, 8), {0, 0, 16, 16}), Error);
    EXPECT_THROW(unet_forward(p, small_bev(1), sample_latent(0, 9), {0, 0, 32, 32}), Error);
}

TEST(Latent, DeterministicStandardNormal) {
    const LatentCode a = sample_latent(4, 4096);
    EXPECT_EQ(a.s, sample_latent(4, 4096).s);
    double m = 0.0, v = 0.0;
    for (double x : a.s) {
        m += x;
        v += x * x;
    }
    m /= 4096.0;
    EXPECT_NEAR(m, 0.0, 0.06);
    EXPECT_NEAR(v / 4096.0 - m * m, 1.0, 0.1);
}

TEST(Activations, Identities) {
    EXPECT_DOUBLE_EQ(softplus(0.0), std::log(2.0));
    EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
    EXPECT_LT(softplus(-800.0), 1e-300);
    EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
    EXPECT_GE(softplus(-1e308), 0.0);
    EXPECT_EQ(sigmoid(-1e308), 0.0);
}

TEST(Mlp, RangesOverAMillionQueries) {
    const GeneratorConfig c = GeneratorConfig::desk();
    // Large weights push the heads far into saturation.
    GeneratorParams p = init_params(c, 9);
    for (auto &w : p.mlp.sigma.weight) {
        w *= 50.0f;
    }
    for (auto &w : p.mlp.color.weight) {
        w *= 50.0f;
    }
    const FieldMlp mlp(p);
    Rng rng(1);
    std::vector<double> feat(c.out_channels), zs(100);
    std::vector<FieldSample> out(zs.size());
    std::size_t bad = 0;
    for (int col = 0; col < 10000; ++col) {
        for (auto &f : feat) {
            f = rng.normal() * 3.0;
        }
        for (auto &z : zs) {
            z = rng.uniform(c.z_min, c.z_max);
        }
        mlp.evaluate_column(feat, zs, {0, 0, -1}, out);
        for (const auto &smp : out) {
            bad += !(smp.sigma >= 0.0) || !std::isfinite(smp.sigma);
            for (double v : smp.color) {
                bad += !(v >= 0.0 && v <= 1.0);
            }
        }
    }
    EXPECT_EQ(bad, 0u);
}

TEST(Mlp, ColumnMatchesPointEvaluation) {
    const GeneratorConfig c = GeneratorConfig::desk();
    const FieldMlp mlp(init_params(c, 2));
    Rng rng(3);
    std::vector<double> feat(c.out_channels);
    for (auto &f : feat) {
        f = rng.normal();
    }
    const std::vector<double> zs{0.0, 1.3, 4.0, 7.9};
    std::vector<FieldSample> col(zs.size());
    mlp.evaluate_column(feat, zs, {0, 0, -1}, col);
    for (std::size_t i = 0; i < zs.size(); ++i) {
        const FieldSample p = mlp.evaluate(feat, zs[i], {0, 0, -1});
        EXPECT_NEAR(p.sigma, col[i].sigma, 1e-12);
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(p.color[k], col[i].color[k], 1e-12);
        }
    }
}

TEST(LiftAndQuery, PeriodAlignedHeightsAgree) {
    const GeneratorConfig c = small_config();
    const GeneratorParams p = init_params(c, 4);
    const FeatureGrid plane = unet_forward(p, small_bev(2), sample_latent(1, c.latent_dim), {0, 0, 32, 32});
    const FieldMlp mlp(p);
    // The lowest pe band has period 2 / base; higher bands divide it.
    const double period = 2.0 / c.pe_cfg.base;
    for (double z : {0.25, 1.5, 3.0}) {
        const FieldSample a = lift_and_query(plane, mlp, 10.5, 20.25, z, {0, 0, -1});
        const FieldSample b = lift_and_query(plane, mlp, 10.5, 20.25, z + period, {0, 0, -1});
        EXPECT_NEAR(a.sigma, b.sigma, 1e-9);
        EXPECT_NEAR(a.color[1], b.color[1], 1e-9);
    }
}

TEST(NeuralField, SharedPlaneAndClampedBorder) {
    const GeneratorConfig c = small_config();
    const GeneratorParams p = init_params(c, 5);
    const BevMap b          = small_bev(3);
    const LatentCode s      = sample_latent(2, c.latent_dim);
    const auto f1 = neural_field(p, b, s, {0, 0, 32, 32});
    const auto f2 = neural_field(p, b, s, {0, 0, 32, 32});
    const FieldSample q1 = f1->query({7.25, 9.5, 1.0}, {0, 0, -1});
    const FieldSample q2 = f2->query({7.25, 9.5, 1.0}, {0, 0, -1});
    EXPECT_EQ(q1.sigma, q2.sigma);
    EXPECT_EQ(q1.color, q2.color);
    // Outside the footprint the plane clamps to its border pixels.
    const FieldSample edge = f1->query({0.5, 9.5, 1.0}, {0, 0, -1});
    const FieldSample out  = f1->query({-40.0, 9.5, 1.0}, {0, 0, -1});
    EXPECT_EQ(edge.sigma, out.sigma);
    EXPECT_EQ(edge.color, out.color);
}

TEST(NeuralField, TranslatedInputsGiveTranslatedQueries) {
    // Moving the window with the content pairs queries at translated points
    // better than at the original points.
    const GeneratorConfig c = small_config();
    const GeneratorParams p = init_params(c, 6);
    const BevMap b          = small_bev(4);
    const LatentCode s      = sample_latent(3, c.latent_dim);
    for (int k : {3, 8}) {
        const auto base  = neural_field(p, b, s, {0, 0, 32, 32});
        const auto moved = neural_field(p, translate(b, k, 0), s, {0, -k, 32, 32});
        double paired = 0.0, unpaired = 0.0;
        for (double x = 10.5; x < 22.0; x += 1.0) {
            for (double y = 10.5; y < 22.0; y += 1.0) {
                const FieldSample a = base->query({x, y, 1.0}, {0, 0, -1});
                const FieldSample m = moved->query({x + k, y, 1.0}, {0, 0, -1});
                const FieldSample u = moved->query({x, y, 1.0}, {0, 0, -1});
                paired += std::abs(a.sigma - m.sigma);
                unpaired += std::abs(a.sigma - u.sigma);
            }
        }
        // Instance statistics see the shifted content, so agreement is not exact.
        EXPECT_LT(paired, unpaired) << k;
    }
}

} // namespace
} // namespace bevfield
