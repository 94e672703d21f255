// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/signal.hpp"

#include "bevfield/container.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace bevfield {

FeatureGrid::FeatureGrid(int h, int w, int c, WorldToGrid w2g)
    : FeatureGrid(h, w, c, std::vector<double>(static_cast<std::size_t>(std::max(h, 0)) *
                                                   std::max(w, 0) * std::max(c, 0),
                                               0.0),
                  w2g) {}

FeatureGrid::FeatureGrid(int h, int w, int c, std::vector<double> data, WorldToGrid w2g)
    : mH(h), mW(w), mC(c), mData(std::move(data)), mW2g(w2g) {
    if (h < 1 || w < 1 || c < 1) {
        fail(ErrorKind::invalid_argument, "feature grid dims must be positive");
    }
    if (mData.size() != static_cast<std::size_t>(h) * w * c) {
        fail(ErrorKind::invalid_argument, "feature grid data size mismatch");
    }
}

bool
FeatureGrid::all_finite() const {
    return std::all_of(mData.begin(), mData.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

FourierConfig
default_fourier(int channels, double scale, double min_cycles_per_px, double max_cycles_per_px) {
    if (channels < 2 || channels % 2 != 0) {
        fail(ErrorKind::invalid_argument, "Fourier channel count must be even and >= 2");
    }
    const int m = channels / 2;
    FourierConfig cfg;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < m; ++i) {
        const double t   = m == 1 ? 0.0 : static_cast<double>(i) / (m - 1);
        const double mag = min_cycles_per_px * std::pow(max_cycles_per_px / min_cycles_per_px, t) * scale;
        const double ang = golden * i;
        cfg.amplitudes.push_back(1.0);
        cfg.frequencies.push_back({mag * std::cos(ang), mag * std::sin(ang)});
    }
    return cfg;
}

FeatureGrid
fourier_grid(const FourierConfig &cfg, const WindowSpec &window, const WorldToGrid &global_w2g) {
    const std::size_t m = cfg.amplitudes.size();
    if (m == 0 || cfg.frequencies.size() != m) {
        fail(ErrorKind::invalid_argument, "Fourier config needs matching, non-empty a_i and b_i");
    }
    const double nyquist = 0.5 * global_w2g.scale;
    for (std::size_t i = 0; i < m; ++i) {
        const auto &b = cfg.frequencies[i];
        if (std::abs(b[0]) >= nyquist || std::abs(b[1]) >= nyquist) {
            fail(ErrorKind::invalid_argument,
                 "Fourier frequency b_" + std::to_string(i) + " = (" + std::to_string(b[0]) + ", " +
                     std::to_string(b[1]) + ") reaches the Nyquist rate " + std::to_string(nyquist));
        }
    }

    WorldToGrid local = global_w2g;
    local.offset_x -= window.col;
    local.offset_y -= window.row;
    FeatureGrid g(window.h, window.w, static_cast<int>(2 * m), local);
    const double twoPi = 2.0 * std::numbers::pi;
    for (int i = 0; i < window.h; ++i) {
        const double y = global_w2g.row_center(window.row + i);
        for (int j = 0; j < window.w; ++j) {
            const double x = global_w2g.col_center(window.col + j);
            double *px     = g.pixel(i, j);
            for (std::size_t k = 0; k < m; ++k) {
                const double phase = twoPi * (cfg.frequencies[k][0] * x + cfg.frequencies[k][1] * y);
                px[2 * k]          = cfg.amplitudes[k] * std::cos(phase);
                px[2 * k + 1]      = cfg.amplitudes[k] * std::sin(phase);
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------

FirFilter
design_lowpass(double cutoff_frac, double half_width, double beta) {
    if (!(cutoff_frac > 0.0 && cutoff_frac <= 0.5)) {
        fail(ErrorKind::invalid_argument, "cutoff must lie in (0, 0.5]");
    }
    if (!(half_width >= 1.0)) {
        fail(ErrorKind::invalid_argument, "half_width must be >= 1");
    }
    const int M = static_cast<int>(std::ceil(half_width / (2.0 * cutoff_frac) - 1e-9));
    std::vector<double> half(M + 1);
    const double i0beta = std::cyl_bessel_i(0.0, beta);
    for (int n = 0; n <= M; ++n) {
        const double x    = 2.0 * cutoff_frac * n;
        const double sinc = n == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        const double r    = static_cast<double>(n) / M;
        const double win  = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0beta;
        half[n]           = 2.0 * cutoff_frac * sinc * win;
    }
    // Sum in mirrored pairs so the normalized taps stay exactly symmetric.
    double sum = half[0];
    for (int n = 1; n <= M; ++n) {
        sum += 2.0 * half[n];
    }
    FirFilter f;
    f.cutoff_frac = cutoff_frac;
    f.design      = {half_width, beta};
    f.taps.resize(2 * M + 1);
    for (int n = 0; n <= M; ++n) {
        f.taps[M + n] = f.taps[M - n] = half[n] / sum;
    }
    return f;
}

double
frequency_response(const FirFilter &f, double freq) {
    std::complex<double> acc = 0.0;
    const int M              = f.half_length();
    for (int n = 0; n < static_cast<int>(f.taps.size()); ++n) {
        acc += f.taps[n] * std::polar(1.0, -2.0 * std::numbers::pi * freq * (n - M));
    }
    return std::abs(acc);
}

namespace {

// Horizontal pass evaluated only at columns 0, step, 2*step, ...
FeatureGrid
filter_rows(const FeatureGrid &g, const std::vector<double> &taps, int step) {
    const int H = g.height(), W = g.width(), C = g.channels();
    const int M    = static_cast<int>(taps.size() / 2);
    const int outW = (W + step - 1) / step;
    FeatureGrid out(H, outW, C, g.world_to_grid());
    parallel_for(0, H, [&](int r) {
        for (int jo = 0; jo < outW; ++jo) {
            const int j = jo * step;
            double *dst = out.pixel(r, jo);
            const int a0 = std::max(0, M - j);
            const int a1 = std::min(static_cast<int>(taps.size()), W - j + M);
            for (int a = a0; a < a1; ++a) {
                const double t     = taps[a];
                const double *src  = g.pixel(r, j + a - M);
                for (int k = 0; k < C; ++k) {
                    dst[k] += t * src[k];
                }
            }
        }
    });
    return out;
}

// Vertical pass evaluated only at rows 0, step, 2*step, ...
FeatureGrid
filter_cols(const FeatureGrid &g, const std::vector<double> &taps, int step) {
    const int H = g.height(), W = g.width(), C = g.channels();
    const int M    = static_cast<int>(taps.size() / 2);
    const int outH = (H + step - 1) / step;
    FeatureGrid out(outH, W, C, g.world_to_grid());
    parallel_for(0, outH, [&](int io) {
        const int i  = io * step;
        const int b0 = std::max(0, M - i);
        const int b1 = std::min(static_cast<int>(taps.size()), H - i + M);
        for (int b = b0; b < b1; ++b) {
            const double t    = taps[b];
            const double *src = g.pixel(i + b - M, 0);
            double *dst       = out.pixel(io, 0);
            for (int x = 0; x < W * C; ++x) {
                dst[x] += t * src[x];
            }
        }
    });
    return out;
}

WorldToGrid
downsampled_w2g(const WorldToGrid &t, int f) {
    return {t.scale / f, 0.5 - 0.5 / f + t.offset_x / f, 0.5 - 0.5 / f + t.offset_y / f};
}

} // namespace

FeatureGrid
filter2d(const FeatureGrid &g, const FirFilter &f) {
    if (f.taps.empty() || f.taps.size() % 2 == 0) {
        fail(ErrorKind::invalid_argument, "filter taps must have odd length");
    }
    if (static_cast<int>(f.taps.size()) > std::min(g.height(), g.width())) {
        fail(ErrorKind::invalid_argument,
             "grid " + std::to_string(g.height()) + "x" + std::to_string(g.width()) +
                 " smaller than filter of " + std::to_string(f.taps.size()) + " taps");
    }
    return filter_cols(filter_rows(g, f.taps, 1), f.taps, 1);
}

FeatureGrid
downsample(const FeatureGrid &g, int factor, bool lowpass, const LowpassDesign &design) {
    if (factor < 1) {
        fail(ErrorKind::invalid_argument, "downsample factor must be >= 1");
    }
    if (g.height() % factor != 0 || g.width() % factor != 0) {
        fail(ErrorKind::invalid_argument, "grid " + std::to_string(g.height()) + "x" +
                                              std::to_string(g.width()) +
                                              " not divisible by factor " + std::to_string(factor));
    }
    FeatureGrid out;
    if (lowpass) {
        const double cutoff = 0.5 / factor;
        const int fitM      = (std::min(g.height(), g.width()) - 1) / 2;
        double halfWidth    = design.half_width;
        if (std::ceil(halfWidth / (2.0 * cutoff) - 1e-9) > fitM) {
            halfWidth = std::max(1.0, fitM * 2.0 * cutoff);
        }
        const FirFilter f = design_lowpass(cutoff, halfWidth, design.beta);
        if (static_cast<int>(f.taps.size()) > std::min(g.height(), g.width())) {
            fail(ErrorKind::invalid_argument, "grid too small for a factor-" +
                                                  std::to_string(factor) + " low-pass");
        }
        out = filter_cols(filter_rows(g, f.taps, factor), f.taps, factor);
    } else {
        const int H = g.height() / factor, W = g.width() / factor, C = g.channels();
        out = FeatureGrid(H, W, C);
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                std::copy_n(g.pixel(i * factor, j * factor), C, out.pixel(i, j));
            }
        }
    }
    out.set_world_to_grid(downsampled_w2g(g.world_to_grid(), factor));
    return out;
}

FeatureGrid
upsample(const FeatureGrid &g, int factor) {
    if (factor < 1) {
        fail(ErrorKind::invalid_argument, "upsample factor must be >= 1");
    }
    if (factor == 1) {
        return g;
    }
    const int H = g.height(), W = g.width(), C = g.channels();
    const auto &t = g.world_to_grid();
    FeatureGrid out(H * factor, W * factor, C,
                    WorldToGrid{t.scale * factor, 0.5 - 0.5 * factor + factor * t.offset_x,
                     0.5 - 0.5 * factor + factor * t.offset_y});
    parallel_for(0, H * factor, [&](int r) {
        const int i0    = r / factor;
        const int i1    = std::min(i0 + 1, H - 1);
        const double ty = static_cast<double>(r - i0 * factor) / factor;
        for (int c = 0; c < W * factor; ++c) {
            const int j0      = c / factor;
            const int j1      = std::min(j0 + 1, W - 1);
            const double tx   = static_cast<double>(c - j0 * factor) / factor;
            const double *p00 = g.pixel(i0, j0);
            const double *p01 = g.pixel(i0, j1);
            const double *p10 = g.pixel(i1, j0);
            const double *p11 = g.pixel(i1, j1);
            double *dst       = out.pixel(r, c);
            for (int k = 0; k < C; ++k) {
                const double top    = p00[k] + tx * (p01[k] - p00[k]);
                const double bottom = p10[k] + tx * (p11[k] - p10[k]);
                dst[k]              = top + ty * (bottom - top);
            }
        }
    });
    return out;
}

FeatureGrid
shift(const FeatureGrid &g, int dx, int dy) {
    FeatureGrid out(g.height(), g.width(), g.channels(), g.world_to_grid());
    for (int r = 0; r < g.height(); ++r) {
        const int tr = r + dy;
        if (tr < 0 || tr >= g.height()) {
            continue;
        }
        for (int c = 0; c < g.width(); ++c) {
            const int tc = c + dx;
            if (tc >= 0 && tc < g.width()) {
                std::copy_n(g.pixel(r, c), g.channels(), out.pixel(tr, tc));
            }
        }
    }
    return out;
}

FeatureGrid
crop(const FeatureGrid &g, int row0, int col0, int h, int w) {
    if (row0 < 0 || col0 < 0 || h < 1 || w < 1 || row0 + h > g.height() || col0 + w > g.width()) {
        fail(ErrorKind::out_of_range, "crop outside grid");
    }
    WorldToGrid t = g.world_to_grid();
    t.offset_x -= col0;
    t.offset_y -= row0;
    FeatureGrid out(h, w, g.channels(), t);
    for (int r = 0; r < h; ++r) {
        std::copy_n(g.pixel(row0 + r, col0), static_cast<std::size_t>(w) * g.channels(),
                    out.pixel(r, 0));
    }
    return out;
}

// ---------------------------------------------------------------------------

void
pe(double z, const PeConfig &cfg, std::span<double> out) {
    double freq = std::numbers::pi * cfg.base;
    for (int l = 0; l < cfg.n_freqs; ++l) {
        out[2 * l]     = std::sin(freq * z);
        out[2 * l + 1] = std::cos(freq * z);
        freq *= 2.0;
    }
}

std::vector<double>
pe(double z, const PeConfig &cfg) {
    if (cfg.n_freqs < 1) {
        fail(ErrorKind::invalid_argument, "positional embedding needs n_freqs >= 1");
    }
    std::vector<double> out(cfg.dims());
    pe(z, cfg, out);
    return out;
}

void
bilinear_sample(const FeatureGrid &g, double x, double y, std::span<double> out) {
    const auto &t  = g.world_to_grid();
    const double u = std::clamp(t.grid_x(x) - 0.5, 0.0, static_cast<double>(g.width() - 1));
    const double v = std::clamp(t.grid_y(y) - 0.5, 0.0, static_cast<double>(g.height() - 1));
    const int j0   = static_cast<int>(u);
    const int i0   = static_cast<int>(v);
    const int j1   = std::min(j0 + 1, g.width() - 1);
    const int i1   = std::min(i0 + 1, g.height() - 1);
    const double tx = u - j0;
    const double ty = v - i0;
    const double *p00 = g.pixel(i0, j0);
    const double *p01 = g.pixel(i0, j1);
    const double *p10 = g.pixel(i1, j0);
    const double *p11 = g.pixel(i1, j1);
    for (int k = 0; k < g.channels(); ++k) {
        const double top    = p00[k] + tx * (p01[k] - p00[k]);
        const double bottom = p10[k] + tx * (p11[k] - p10[k]);
        out[k]              = top + ty * (bottom - top);
    }
}

std::vector<double>
bilinear_sample(const FeatureGrid &g, double x, double y) {
    std::vector<double> out(g.channels());
    bilinear_sample(g, x, y, out);
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t>
encode_grid(const FeatureGrid &g) {
    const auto &t = g.world_to_grid();
    const nlohmann::json header = {
        {"h", g.height()},
        {"w", g.width()},
        {"c", g.channels()},
        {"world_to_grid", {{"scale", t.scale}, {"offset", {t.offset_x, t.offset_y}}}}};
    std::vector<float> payload(g.data().begin(), g.data().end());
    return encode_container("FGRID001", header, payload);
}

FeatureGrid
decode_grid(std::span<const std::uint8_t> bytes) {
    auto c = decode_container(bytes, "FGRID001", [](const nlohmann::json &h) {
        return h.at("h").get<std::size_t>() * h.at("w").get<std::size_t>() *
               h.at("c").get<std::size_t>();
    });
    const auto &h = c.header;
    WorldToGrid t;
    try {
        t.scale    = h.at("world_to_grid").at("scale").get<double>();
        t.offset_x = h.at("world_to_grid").at("offset").at(0).get<double>();
        t.offset_y = h.at("world_to_grid").at("offset").at(1).get<double>();
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed grid header: ") + e.what());
    }
    return FeatureGrid(h.at("h").get<int>(), h.at("w").get<int>(), h.at("c").get<int>(),
                       std::vector<double>(c.payload.begin(), c.payload.end()), t);
}

} // namespace bevfield
