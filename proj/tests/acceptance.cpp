// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner: one PASS/FAIL line per criterion, tolerances pinned
// below. Exit status is nonzero when any criterion fails.

#include "commands.hpp"
#include "oracles.hpp"

#include "bevfield/bevmap.hpp"
#include "bevfield/container.hpp"
#include "bevfield/generator.hpp"
#include "bevfield/image_io.hpp"
#include "bevfield/metrics.hpp"
#include "bevfield/pipeline.hpp"
#include "bevfield/service.hpp"
#include "bevfield/stitcher.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>

namespace bevfield::acceptance {
namespace {

namespace fs = std::filesystem;
using json   = nlohmann::json;

// Pinned tolerances and budgets.
constexpr double kCompositeTol       = 1e-6;
constexpr double kCompositeBudgetS   = 5.0;
constexpr double kWeightSumSlack     = 1e-9;
constexpr double kFourierTol         = 1e-6;
constexpr double kTapSumTol          = 1e-12;
constexpr double kMinStopbandDb      = 40.0;
constexpr double kOracleMseMax       = 1e-10;
constexpr double kOracleBudgetS      = 120.0;
constexpr int kAblationMinWins       = 4;
constexpr double kAblationBudgetS    = 900.0;
constexpr double kSerrationPerStep   = 5e-4; // recorded bound: 5e-4 * n_step
constexpr double kSsaaMinRatio       = 2.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double
image_l2(const Image &a, const Image &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    }
    return std::sqrt(s);
}

std::string
fmt(const char *f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// 1. composite vs sequential front-to-back reference.
Outcome
compositing_oracle() {
    Rng rng(1001);
    std::vector<SampleBatch> batches;
    for (int i = 0; i < 1000; ++i) {
        batches.push_back(oracle::random_batch(rng, 64));
    }
    const auto t0 = std::chrono::steady_clock::now();
    double worst  = 0.0;
    for (const auto &b : batches) {
        const auto got = composite(b).color;
        const auto ref = oracle::sequential_composite(b);
        for (int k = 0; k < 3; ++k) {
            worst = std::max(worst, std::abs(got[k] - ref[k]));
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= kCompositeTol && secs < kCompositeBudgetS,
            fmt("max |diff| %.3g (tol %.0e), %.3f s (budget %.0f s)", worst, kCompositeTol, secs,
                kCompositeBudgetS)};
}

// 2. T non-increasing and weights summing to at most one.
Outcome
transmittance_and_weights() {
    Rng rng(1001);
    int violations = 0;
    for (int i = 0; i < 1000; ++i) {
        const CompositeResult r = composite(oracle::random_batch(rng, 64));
        double sum              = 0.0;
        for (std::size_t k = 0; k < r.weights.size(); ++k) {
            sum += r.weights[k];
            if (k > 0 && r.transmittance[k] > r.transmittance[k - 1]) {
                ++violations;
            }
        }
        if (sum > 1.0 + kWeightSumSlack) {
            ++violations;
        }
    }
    return {violations == 0, fmt("%d violations over 1000 batches", violations)};
}

// 3. Shifting the window by t pixels rotates each (cos, sin) pair by 2 pi b.t.
Outcome
fourier_shift_identity() {
    Rng rng(3003);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const WorldToGrid w2g{rng.uniform(0.5, 4.0), rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
        const int channels      = 2 * rng.uniform_int(1, 8);
        const FourierConfig cfg = default_fourier(channels, w2g.scale, 1.0 / rng.uniform(8.0, 128.0),
                                                  rng.uniform(0.1, 0.45));
        const WindowSpec win{rng.uniform_int(-50, 50), rng.uniform_int(-50, 50), rng.uniform_int(1, 12),
                             rng.uniform_int(1, 12)};
        const int dx = rng.uniform_int(-40, 40), dy = rng.uniform_int(-40, 40);
        const FeatureGrid base  = fourier_grid(cfg, win, w2g);
        const FeatureGrid moved = fourier_grid(cfg, {win.row + dy, win.col + dx, win.h, win.w}, w2g);
        for (std::size_t f = 0; f < cfg.amplitudes.size(); ++f) {
            const double theta = 2.0 * std::numbers::pi *
                                 (cfg.frequencies[f][0] * dx + cfg.frequencies[f][1] * dy) / w2g.scale;
            const double c = std::cos(theta), s = std::sin(theta);
            for (int i = 0; i < win.h; ++i) {
                for (int j = 0; j < win.w; ++j) {
                    const double a = base.at(i, j, 2 * f), b = base.at(i, j, 2 * f + 1);
                    worst = std::max(worst, std::abs(moved.at(i, j, 2 * f) - (a * c - b * s)));
                    worst = std::max(worst, std::abs(moved.at(i, j, 2 * f + 1) - (b * c + a * s)));
                }
            }
        }
    }
    return {worst <= kFourierTol, fmt("max |diff| %.3g over 100 pairs (tol %.0e)", worst, kFourierTol)};
}

// 4. Default Kaiser low-pass: unit DC, symmetric, stopband from its own DFT.
Outcome
filter_design() {
    bool ok = true;
    std::string detail;
    for (double fc : {0.25, 0.125}) {
        const FirFilter f = design_lowpass(fc);
        double sum        = 0.0;
        bool symmetric    = true;
        for (std::size_t i = 0; i < f.taps.size(); ++i) {
            sum += f.taps[i];
            symmetric = symmetric && f.taps[i] == f.taps[f.taps.size() - 1 - i];
        }
        const double atten_db = -20.0 * std::log10(oracle::dft_magnitude(f.taps, 1.5 * fc));
        ok = ok && std::abs(sum - 1.0) <= kTapSumTol && symmetric && atten_db >= kMinStopbandDb;
        detail += fmt("fc %.3f: |sum-1| %.1e, %s, %.1f dB at 1.5 fc; ", fc, std::abs(sum - 1.0),
                      symmetric ? "symmetric" : "asymmetric", atten_db);
    }
    detail += fmt("need >= %.0f dB", kMinStopbandDb);
    return {ok, detail};
}

// 5. Procedural oracle is exactly equivariant inside the margin.
Outcome
procedural_eqt() {
    const auto t0 = std::chrono::steady_clock::now();
    RenderSettings rs;
    rs.n_samples            = 32;
    const EqtGenerator gen  = procedural_generator(Palette::clevr(), {}, rs);
    double worst            = 0.0;
    bool capped             = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RasterSpec spec;
        spec.h = spec.w = 64;
        const BevMap b  = rasterize(sample_scene(seed, 3, 8, Palette::clevr(), sampling_inside_margin(spec)), spec);
        EqtConfig cfg;
        cfg.latent_seeds  = {0};
        cfg.shifts        = {1, 3, 7, 12, spec.margin_px};
        cfg.crop_border   = 0; // no filters in this path: compare the whole overlap
        const EqtReport r = eqt(gen, b, {0, 0, 64, 64}, cfg);
        capped            = capped && r.capped;
        for (const auto &s : r.samples) {
            worst = std::max(worst, s.mse);
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {capped && worst < kOracleMseMax && secs < kOracleBudgetS,
            fmt("5 scenes x shifts {1,3,7,12,16}: max MSE %.3g (need < %.0e), %s, %.1f s (budget %.0f s)",
                worst, kOracleMseMax, capped ? "capped" : "not capped", secs, kOracleBudgetS)};
}

// 6. Removing the low-pass filters or the BEV padding lowers EQT.
Outcome
neural_ablation() {
    const auto t0 = std::chrono::steady_clock::now();
    AblationConfig cfg;
    cfg.weight_seeds = {0, 1, 2, 3, 4};
    cfg.latent_seeds = {0, 1, 2};
    cfg.shifts       = {1, 2, 4, 8};
    cfg.variants     = {Ablation::full, Ablation::no_lowpass, Ablation::no_padding};
    const AblationTable t = run_ablation(cfg);
    int lowpass_wins = 0, padding_wins = 0;
    std::string medians;
    for (auto ws : cfg.weight_seeds) {
        const double full = t.find(Ablation::full, ws).report.median_psnr_db();
        const double nolp = t.find(Ablation::no_lowpass, ws).report.median_psnr_db();
        const double nopd = t.find(Ablation::no_padding, ws).report.median_psnr_db();
        lowpass_wins += full > nolp;
        padding_wins += full > nopd;
        medians += fmt(" [%.2f %.2f %.2f]", full, nolp, nopd);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {lowpass_wins >= kAblationMinWins && padding_wins >= kAblationMinWins && secs < kAblationBudgetS,
            fmt("full>no_lowpass %d/5, full>no_padding %d/5 (need %d/5), %.0f s; median dB [full no_lowpass no_padding]:",
                lowpass_wins, padding_wins, kAblationMinWins, secs) +
                medians};
}

BevMap
strip_map(int w, std::uint64_t seed) {
    RasterSpec s;
    s.h = 64;
    s.w = w;
    return rasterize(sample_scene(seed, 8, 8, Palette::clevr(), sampling_inside_margin(s)), s);
}

// 7. Panorama width, n_loc rounding and the serration envelope.
Outcome
stitch_geometry() {
    bool ok = true;
    std::string detail;
    for (int n : {1, 10, 20, 30, 40}) {
        for (double f : {0.5, 1.0, 2.0}) {
            StitchConfig c;
            c.n_step = n;
            c.f_norm = f;
            ok       = ok && c.n_loc() == static_cast<int>(std::lround(n / f));
        }
    }
    const BevMap g = strip_map(304, 7);
    RenderSettings rs;
    rs.n_samples = 16;
    const auto factory = procedural_factory(Palette::clevr());
    StitchConfig ref_cfg;
    ref_cfg.n_step  = 1;
    Image reference;
    double prev_bound = 0.0;
    for (int n : {1, 10, 20, 30, 40}) {
        StitchConfig c;
        c.n_step          = n;
        const auto frames = traverse(factory, g, c, side_rig(c, g.world_to_grid()), {}, rs);
        const Image pano  = stitch(frames, c);
        const int K       = (g.width() - c.window_w) / n + 1;
        ok = ok && static_cast<int>(frames.size()) == K && pano.width() == K * c.n_loc();
        if (n == 1) {
            reference = pano;
        }
        const double d     = serration_diff(reference, ref_cfg, pano, c);
        const double bound = kSerrationPerStep * n;
        ok = ok && d <= bound && bound >= prev_bound;
        prev_bound = bound;
        detail += fmt("n %d: K %d width %d diff %.2e (bound %.1e); ", n, K, pano.width(), d, bound);
    }
    return {ok, detail};
}

// 8. Stitching a translated global map gives the translated panorama.
Outcome
translation_consistency() {
    const BevMap g = strip_map(192, 8);
    StitchConfig c;
    c.n_step = 4;
    RenderSettings rs;
    rs.n_samples       = 16;
    const auto factory = procedural_factory(Palette::clevr());
    const CameraRig rig = side_rig(c, g.world_to_grid());
    const Image base    = stitch(traverse(factory, g, c, rig, {}, rs), c);
    double worst        = 0.0;
    for (int t : {4, 8, 12}) {
        const Image moved = stitch(traverse(factory, translate(g, t, 0), c, rig, {}, rs), c);
        const int shift   = t / c.n_step * c.n_loc();
        for (int i = 0; i < base.height(); ++i) {
            for (int j = shift; j < base.width(); ++j) {
                for (int k = 0; k < 3; ++k) {
                    worst = std::max(worst, std::abs(moved.at(i, j, k) - base.at(i, j - shift, k)));
                }
            }
        }
    }
    return {worst == 0.0, fmt("translations {4,8,12}: max interior |diff| %.3g (need exactly 0)", worst)};
}

// 9. Supersampling converges on a sub-pixel checkerboard.
Outcome
ssaa_convergence() {
    ProceduralOptions opts;
    opts.checker        = true;
    opts.checker_period = 0.37;
    const auto field    = procedural_field({}, Palette::clevr(), opts);
    const Camera cam    = Camera::top_down(0.0, 0.0, 2.0, 16.0, 0.5, 4.0);
    RenderSettings s;
    s.width = s.height = 32;
    s.n_samples        = 16;
    auto at            = [&](int k) {
        s.ssaa = k;
        return render(*field, cam, s);
    };
    const Image ref   = at(16);
    const double e1   = image_l2(at(1), ref);
    const double e4   = image_l2(at(4), ref);
    const double ratio = e1 / e4;
    return {ratio >= kSsaaMinRatio,
            fmt("|ssaa1-ssaa16| %.3f, |ssaa4-ssaa16| %.3f, ratio %.2f (need >= %.1f)", e1, e4, ratio,
                kSsaaMinRatio)};
}

// 10. CLI replay, file round-trips and byte-identical service renders.
Outcome
determinism() {
    const fs::path root = fs::temp_directory_path() / "bevfield_acceptance";
    fs::remove_all(root);
    std::ostringstream log;
    auto cfg = [](const std::string &cmd, const json &overrides) {
        json c = cli::default_config(cli::command(cmd));
        for (const auto &[k, v] : overrides.items()) {
            c[k] = v;
        }
        return c;
    };
    auto dir = [&](const std::string &name) { return (root / name).string(); };

    cli::run("gen-bev", cfg("gen-bev", {{"seed", 11}, {"width", 96}}), dir("gen"), log);
    const std::string bev = dir("gen") + "/scene.bev";
    cli::run("gen-bev", cfg("gen-bev", {{"seed", 12}}), dir("gen_sq"), log);
    const std::string square = dir("gen_sq") + "/scene.bev";
    const std::vector<std::pair<std::string, json>> runs = {
        {"gen-bev", cfg("gen-bev", {{"seed", 11}})},
        {"render", cfg("render", {{"bev", square}, {"n_samples", 16}})},
        {"render", cfg("render", {{"bev", square}, {"mode", "neural"}, {"n_samples", 8}})},
        {"traverse", cfg("traverse", {{"bev", bev}, {"n_step", 8}, {"n_samples", 8}})},
        {"stitch", cfg("stitch", {{"bev", bev}, {"n_steps", {1, 16}}, {"n_samples", 8}})},
        {"eqt", cfg("eqt", {{"bev", square}, {"latents", {0}}, {"n_samples", 8}})},
        {"ablate", cfg("ablate", {{"weight_seeds", {0}}, {"latents", {0}}, {"shifts", {1}}, {"n_samples", 4}})},
    };
    int replayed = 0, mismatched = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const std::string out = dir("run" + std::to_string(i));
        cli::run(runs[i].first, runs[i].second, out, log);
        const auto res = cli::replay(out + "/manifest.json", out + "_replay", log);
        ++replayed;
        mismatched += res.ok ? 0 : 1;
    }

    const auto bev_bytes = read_file(bev);
    const bool bev_rt    = encode_bev(decode_bev(bev_bytes)) == bev_bytes;
    const GeneratorParams params = init_params(generator_config_for(decode_bev(read_file(square)).spec()), 3);
    const auto w_bytes           = encode_weights(params);
    const bool weights_rt        = decode_weights(w_bytes) == params && encode_weights(decode_weights(w_bytes)) == w_bytes;

    ServiceOptions opts;
    opts.port = 0;
    Service service(opts);
    const int port = service.bind();
    std::thread server([&] { service.listen(); });
    bool service_ok = false;
    {
        httplib::Client client("127.0.0.1", port);
        client.set_read_timeout(120, 0);
        const auto created = client.Post("/v1/sessions", R"({"schema":"onehot_color_shape","h":64,"w":64,"seed":5})",
                                         "application/json");
        if (created && created->status == 201) {
            const std::string id = json::parse(created->body)["id"];
            const std::string path = "/v1/sessions/" + id + "/render?n_samples=16";
            const auto a = client.Get(path), b = client.Get(path), c = client.Get(path);
            service_ok = a && b && c && a->status == 200 && !a->body.empty() && a->body == b->body &&
                         b->body == c->body;
        }
    }
    service.stop();
    server.join();
    fs::remove_all(root);

    return {mismatched == 0 && bev_rt && weights_rt && service_ok,
            fmt("CLI replays %d/%d identical; .bev %s; weights %s; service render %s", replayed - mismatched,
                replayed, bev_rt ? "bit-exact" : "differs", weights_rt ? "bit-exact" : "differs",
                service_ok ? "byte-identical x3" : "differs")};
}

} // namespace
} // namespace bevfield::acceptance

int
main() {
    using namespace bevfield::acceptance;
    const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
        {"compositing oracle", compositing_oracle},
        {"transmittance and weights", transmittance_and_weights},
        {"Fourier shift identity", fourier_shift_identity},
        {"filter design", filter_design},
        {"procedural EQT", procedural_eqt},
        {"neural ablation direction", neural_ablation},
        {"stitching geometry", stitch_geometry},
        {"global translation", translation_consistency},
        {"SSAA", ssaa_convergence},
        {"determinism and round-trips", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("criterion %zu: %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
