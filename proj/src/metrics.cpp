// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace bevfield {

namespace {

void
require_same_dims(const Image &a, const Image &b) {
    if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
        fail(ErrorKind::invalid_argument,
             "image dims differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                 "x" + std::to_string(a.channels()) + " vs " + std::to_string(b.height()) + "x" +
                 std::to_string(b.width()) + "x" + std::to_string(b.channels()));
    }
}

} // namespace

double
mse(const Image &a, const Image &b) {
    require_same_dims(a, b);
    const auto da = a.data(), db = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        acc += d * d;
    }
    return acc / static_cast<double>(da.size());
}

double
psnr_from_mse(double m, double i_max, double cap_db) {
    if (m < 0.0 || !std::isfinite(m)) {
        fail(ErrorKind::invalid_argument, "MSE must be finite and non-negative");
    }
    if (m == 0.0) {
        return cap_db;
    }
    return std::min(cap_db, 10.0 * std::log10(i_max * i_max / m));
}

double
psnr(const Image &a, const Image &b, double i_max, double cap_db) {
    return psnr_from_mse(mse(a, b), i_max, cap_db);
}

double
high_frequency_energy(const Image &img) {
    const int h = img.height(), w = img.width(), c = img.channels();
    double acc      = 0.0;
    std::size_t cnt = 0;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            for (int k = 0; k < c; ++k) {
                const double v = img.at(i, j, k);
                if (j + 1 < w) {
                    const double d = img.at(i, j + 1, k) - v;
                    acc += d * d;
                    ++cnt;
                }
                if (i + 1 < h) {
                    const double d = img.at(i + 1, j, k) - v;
                    acc += d * d;
                    ++cnt;
                }
            }
        }
    }
    return cnt ? acc / static_cast<double>(cnt) : 0.0;
}

nlohmann::json
to_json(const EqtConfig &c) {
    nlohmann::json j = {{"latent_seeds", c.latent_seeds}, {"latent_dim", c.latent_dim},
                        {"shifts", c.shifts},             {"mapping", c.mapping},
                        {"i_max", c.i_max},               {"cap_db", c.cap_db}};
    j["crop_border"] = c.crop_border ? nlohmann::json(*c.crop_border) : nlohmann::json(nullptr);
    return j;
}

double
EqtReport::median_psnr_db() const {
    if (samples.empty()) {
        return 0.0;
    }
    std::vector<double> v;
    for (const auto &s : samples) {
        v.push_back(s.psnr_db);
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json
to_json(const EqtReport &r) {
    nlohmann::json samples = nlohmann::json::array();
    std::vector<double> mses;
    for (const auto &s : r.samples) {
        samples.push_back({{"latent_seed", s.latent_seed},
                           {"shift", s.shift},
                           {"mse", s.mse},
                           {"psnr_db", s.psnr_db}});
        mses.push_back(s.mse);
    }
    return {{"eqt_db", r.eqt_db},           {"capped", r.capped},
            {"n_latents", r.n_latents},     {"n_shifts", r.n_shifts},
            {"shift_range", r.shift_range}, {"crop_border", r.crop_border},
            {"mean_mse", r.mean_mse},       {"median_psnr_db", r.median_psnr_db()},
            {"mse", mses},                  {"samples", samples}};
}

int
default_crop_border(const LowpassDesign &design, const std::vector<int> &shifts, int mapping) {
    const FirFilter f = design_lowpass(0.25, design.half_width, design.beta);
    int maxShift      = 0;
    for (int s : shifts) {
        maxShift = std::max(maxShift, std::abs(s));
    }
    return f.half_length() + maxShift * mapping;
}

EqtReport
eqt_core(const ShiftedRender &render, const EqtConfig &cfg) {
    if (cfg.latent_seeds.empty() || cfg.shifts.empty()) {
        fail(ErrorKind::invalid_argument, "EQT needs at least one latent and one shift");
    }
    if (cfg.mapping < 1) {
        fail(ErrorKind::invalid_argument, "EQT mapping must be a positive integer");
    }
    EqtReport rep;
    rep.n_latents   = static_cast<int>(cfg.latent_seeds.size());
    rep.n_shifts    = static_cast<int>(cfg.shifts.size());
    for (int s : cfg.shifts) {
        rep.shift_range = std::max(rep.shift_range, std::abs(s));
    }
    rep.crop_border = cfg.crop_border ? *cfg.crop_border
                                      : default_crop_border(LowpassDesign{}, cfg.shifts, cfg.mapping);
    if (rep.crop_border < 0) {
        fail(ErrorKind::invalid_argument, "crop border must be non-negative");
    }

    double total = 0.0;
    for (const std::uint64_t seed : cfg.latent_seeds) {
        const LatentCode s = sample_latent(seed, cfg.latent_dim);
        const Image ref    = render(s, 0);
        for (const int x : cfg.shifts) {
            const Image moved = x == 0 ? ref : render(s, x);
            if (moved.height() != ref.height() || moved.width() != ref.width() ||
                moved.channels() != ref.channels()) {
                fail(ErrorKind::internal, "generator returned images of different sizes");
            }
            const int mx        = cfg.mapping * x;
            const Image target  = shift(ref, mx, 0);
            const int cb        = rep.crop_border;
            const int r0 = cb, r1 = ref.height() - cb;
            const int c0 = std::max(0, mx) + cb, c1 = ref.width() + std::min(0, mx) - cb;
            if (r1 <= r0 || c1 <= c0) {
                fail(ErrorKind::invalid_argument,
                     "EQT valid region is empty for shift " + std::to_string(x) + " and crop border " +
                         std::to_string(cb));
            }
            double acc = 0.0;
            for (int i = r0; i < r1; ++i) {
                for (int j = c0; j < c1; ++j) {
                    const double *p = moved.pixel(i, j);
                    const double *q = target.pixel(i, j);
                    for (int k = 0; k < ref.channels(); ++k) {
                        // Both images remapped from [0, 1] to [-1, 1].
                        const double d = 2.0 * (p[k] - q[k]);
                        acc += d * d;
                    }
                }
            }
            const double m = acc / (static_cast<double>(r1 - r0) * (c1 - c0) * ref.channels());
            rep.samples.push_back({seed, x, m, psnr_from_mse(m, cfg.i_max, cfg.cap_db)});
            total += m;
        }
    }
    rep.mean_mse = total / static_cast<double>(rep.samples.size());
    const double raw =
        rep.mean_mse == 0.0 ? INFINITY : 10.0 * std::log10(cfg.i_max * cfg.i_max / rep.mean_mse);
    rep.capped = raw >= cfg.cap_db;
    rep.eqt_db = rep.capped ? cfg.cap_db : raw;
    return rep;
}

EqtReport
eqt(const EqtGenerator &gen, const BevMap &b, const WindowSpec &window, const EqtConfig &cfg) {
    for (int x : cfg.shifts) {
        if (std::abs(x) > b.margin_px()) {
            fail(ErrorKind::out_of_range, "EQT shift " + std::to_string(x) +
                                              " exceeds the BEV margin of " +
                                              std::to_string(b.margin_px()) + " px");
        }
    }
    return eqt_core(
        [&](const LatentCode &s, int x) {
            if (x == 0) {
                return gen(b, s, window);
            }
            return gen(translate(b, x, 0), s, window.shifted(0, -x));
        },
        cfg);
}

EqtReport
eqt_sliding(const EqtGenerator &gen, const BevMap &global, const WindowSpec &window,
            const EqtConfig &cfg) {
    return eqt_core(
        [&](const LatentCode &s, int x) {
            const WindowSpec w = window.shifted(0, -x);
            return gen(crop_window(global, w), s, w);
        },
        cfg);
}

} // namespace bevfield
