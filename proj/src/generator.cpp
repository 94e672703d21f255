// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/generator.hpp"

#include "bevfield/container.hpp"
#include "bevfield/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace bevfield {

namespace {

constexpr double kLeaky   = 0.2;
constexpr double kNormEps = 1e-8;

inline double
leaky(double v) {
    return v >= 0.0 ? v : kLeaky * v;
}

const char *
lift_mode_name(LiftMode m) {
    return m == LiftMode::outer_product ? "outer_product" : "concat";
}

LiftMode
lift_mode_from_string(const std::string &s) {
    if (s == "outer_product") {
        return LiftMode::outer_product;
    }
    if (s == "concat") {
        return LiftMode::concat;
    }
    fail(ErrorKind::invalid_argument, "unknown lift mode '" + s + "'");
}

// Shapes are allocated from the config; with an rng the weights are drawn
// N(0, gain^2 / fan_in), otherwise left zero (deserialization skeleton).
void
fill_gaussian(std::vector<float> &v, Rng *rng, double stddev) {
    if (rng == nullptr) {
        return;
    }
    for (auto &x : v) {
        x = static_cast<float>(rng->normal() * stddev);
    }
}

ConvLayer
make_conv(Rng *rng, int k, int cin, int cout, double gain, int fanInChannels = 0) {
    ConvLayer l;
    l.kernel = k;
    l.cin    = cin;
    l.cout   = cout;
    l.weight.assign(static_cast<std::size_t>(k) * k * cin * cout, 0.0f);
    l.bias.assign(cout, 0.0f);
    const int fanIn = k * k * (fanInChannels > 0 ? fanInChannels : cin);
    fill_gaussian(l.weight, rng, gain / std::sqrt(static_cast<double>(fanIn)));
    return l;
}

DenseLayer
make_dense(Rng *rng, int in, int out, double gain, float biasInit = 0.0f) {
    DenseLayer l;
    l.in  = in;
    l.out = out;
    l.weight.assign(static_cast<std::size_t>(in) * out, 0.0f);
    l.bias.assign(out, biasInit);
    fill_gaussian(l.weight, rng, gain / std::sqrt(static_cast<double>(in)));
    return l;
}

ModConvLayer
make_modconv(Rng *rng, const GeneratorConfig &cfg, int cin, int cout) {
    ModConvLayer l;
    l.style = make_dense(rng, cfg.latent_dim, cin, 1.0, 1.0f);
    l.conv  = make_conv(rng, cfg.modconv_kernel, cin, cout, 1.0);
    return l;
}

BlockParams
make_block(Rng *rng, const GeneratorConfig &cfg, int cin, int cout) {
    BlockParams b;
    b.sel.gamma = make_dense(rng, cfg.bev_feat_channels, cin, 1.0);
    b.sel.beta  = make_dense(rng, cfg.bev_feat_channels, cin, 1.0);
    b.conv1     = make_modconv(rng, cfg, cin, cout);
    b.conv2     = make_modconv(rng, cfg, cout, cout);
    return b;
}

int
fourier_input_channels(const GeneratorConfig &cfg) {
    return cfg.input_channels + (cfg.use_sel ? 0 : cfg.bev_feat_channels);
}

GeneratorParams
build_params(const GeneratorConfig &cfg, std::uint64_t seed, Rng *rng) {
    cfg.validate();
    GeneratorParams p;
    p.config    = cfg;
    p.init_seed = seed;

    const double he = std::sqrt(2.0);
    // One-hot BEV pixels carry at most two active channels (color, shape), so
    // the first layer is scaled by that active fan-in rather than all channels.
    const int bevActive = std::min(cfg.bev_channels, 2);
    p.bev_conv1 = make_conv(rng, 3, cfg.bev_channels, cfg.bev_feat_channels, he, bevActive);
    p.bev_conv2 = make_conv(rng, 3, cfg.bev_feat_channels, cfg.bev_feat_channels, he);

    const int inCh  = fourier_input_channels(cfg);
    const int hid   = cfg.hidden_channels;
    for (int l = 1; l <= cfg.n_levels; ++l) {
        p.encoders.push_back(make_block(rng, cfg, l == 1 ? inCh : hid, hid));
    }
    for (int l = cfg.n_levels - 1; l >= 0; --l) {
        const int skip = cfg.use_skips ? (l == 0 ? inCh : hid) : 0;
        p.decoders.push_back(make_block(rng, cfg, hid + skip, hid));
    }
    p.to_plane = make_dense(rng, hid, cfg.out_channels, 1.0);

    const int colorIn = cfg.mlp_hidden + (cfg.use_view_dir ? 3 : 0);
    p.mlp.hidden1     = make_dense(rng, cfg.mlp_input_dims(), cfg.mlp_hidden, he);
    p.mlp.hidden2     = make_dense(rng, cfg.mlp_hidden, cfg.mlp_hidden, he);
    p.mlp.sigma       = make_dense(rng, cfg.mlp_hidden, 1, 1.0);
    p.mlp.color       = make_dense(rng, colorIn, 3, 1.0);
    return p;
}

struct TensorRef {
    std::string name;
    std::vector<int> shape;
    std::vector<float> *data;
};

template <class Fn>
void
visit_dense(const std::string &name, DenseLayer &l, Fn &&fn) {
    fn(TensorRef{name + ".weight", {l.in, l.out}, &l.weight});
    fn(TensorRef{name + ".bias", {l.out}, &l.bias});
}

template <class Fn>
void
visit_conv(const std::string &name, ConvLayer &l, Fn &&fn) {
    fn(TensorRef{name + ".weight", {l.kernel, l.kernel, l.cin, l.cout}, &l.weight});
    fn(TensorRef{name + ".bias", {l.cout}, &l.bias});
}

template <class Fn>
void
visit_block(const std::string &name, BlockParams &b, Fn &&fn) {
    visit_dense(name + ".sel.gamma", b.sel.gamma, fn);
    visit_dense(name + ".sel.beta", b.sel.beta, fn);
    visit_dense(name + ".conv1.style", b.conv1.style, fn);
    visit_conv(name + ".conv1.conv", b.conv1.conv, fn);
    visit_dense(name + ".conv2.style", b.conv2.style, fn);
    visit_conv(name + ".conv2.conv", b.conv2.conv, fn);
}

// Fixed tensor order shared by serialization and equality.
template <class Fn>
void
visit_tensors(GeneratorParams &p, Fn &&fn) {
    visit_conv("bev_conv1", p.bev_conv1, fn);
    visit_conv("bev_conv2", p.bev_conv2, fn);
    for (std::size_t i = 0; i < p.encoders.size(); ++i) {
        visit_block("encoders." + std::to_string(i), p.encoders[i], fn);
    }
    for (std::size_t i = 0; i < p.decoders.size(); ++i) {
        visit_block("decoders." + std::to_string(i), p.decoders[i], fn);
    }
    visit_dense("to_plane", p.to_plane, fn);
    visit_dense("mlp.hidden1", p.mlp.hidden1, fn);
    visit_dense("mlp.hidden2", p.mlp.hidden2, fn);
    visit_dense("mlp.sigma", p.mlp.sigma, fn);
    visit_dense("mlp.color", p.mlp.color, fn);
}

// Core "same" convolution with double weights [ky][kx][cin][cout].
FeatureGrid
convolve(const FeatureGrid &x, int k, int cin, int cout, const std::vector<double> &w,
         const std::vector<double> &bias, bool activate) {
    if (x.channels() != cin) {
        fail(ErrorKind::invalid_argument, "convolution expects " + std::to_string(cin) +
                                              " input channels, got " +
                                              std::to_string(x.channels()));
    }
    const int H = x.height(), W = x.width(), r = k / 2;
    FeatureGrid out(H, W, cout, x.world_to_grid());
    parallel_for(0, H, [&](int i) {
        for (int j = 0; j < W; ++j) {
            double *o = out.pixel(i, j);
            std::copy(bias.begin(), bias.end(), o);
            for (int ky = 0; ky < k; ++ky) {
                const int si = i + ky - r;
                if (si < 0 || si >= H) {
                    continue;
                }
                for (int kx = 0; kx < k; ++kx) {
                    const int sj = j + kx - r;
                    if (sj < 0 || sj >= W) {
                        continue;
                    }
                    const double *xi = x.pixel(si, sj);
                    const double *wk = w.data() + static_cast<std::size_t>(ky * k + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double v   = xi[ci];
                        const double *wr = wk + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) {
                            o[co] += v * wr[co];
                        }
                    }
                }
            }
            if (activate) {
                for (int co = 0; co < cout; ++co) {
                    o[co] = leaky(o[co]);
                }
            }
        }
    });
    return out;
}

std::vector<double>
to_double(const std::vector<float> &v) {
    return {v.begin(), v.end()};
}

} // namespace

// ---------------------------------------------------------------------------

GeneratorConfig
GeneratorConfig::desk() {
    return {};
}

GeneratorConfig
GeneratorConfig::paper() {
    GeneratorConfig c;
    c.input_res       = 256;
    c.input_channels  = 256;
    c.hidden_channels = 256;
    c.bottleneck_res  = 16;
    c.latent_dim      = 512;
    c.fourier_min_cycles = 1.0 / 256.0;
    return c;
}

void
GeneratorConfig::validate() const {
    auto require = [](bool ok, const std::string &msg) {
        if (!ok) {
            fail(ErrorKind::invalid_argument, "generator config: " + msg);
        }
    };
    require(n_levels >= 1 && n_levels <= 16, "n_levels must be in [1, 16]");
    require(input_res > 0 && bottleneck_res > 0, "resolutions must be positive");
    require(input_res % (1 << n_levels) == 0 && input_res >> n_levels == bottleneck_res,
            "input_res / 2^n_levels must equal bottleneck_res");
    require(input_channels >= 2 && input_channels % 2 == 0, "input_channels must be even and >= 2");
    require(hidden_channels > 0 && out_channels > 0 && latent_dim > 0 && bev_channels > 0 &&
                bev_feat_channels > 0 && mlp_hidden > 0,
            "channel counts must be positive");
    require(modconv_kernel >= 1 && modconv_kernel % 2 == 1, "modconv_kernel must be odd");
    require(sel_kernel == 1, "only 1x1 SEL heads are supported");
    require(pe_cfg.n_freqs >= 1, "pe n_freqs must be >= 1");
    require(z_max > z_min, "z_max must exceed z_min");
    require(fourier_min_cycles > 0.0 && fourier_max_cycles >= fourier_min_cycles &&
                fourier_max_cycles < 0.5,
            "Fourier band must satisfy 0 < min <= max < 0.5");
}

int
GeneratorConfig::mlp_input_dims() const {
    return lift_mode == LiftMode::outer_product ? out_channels * pe_cfg.dims()
                                                : out_channels + pe_cfg.dims();
}

nlohmann::json
to_json(const GeneratorConfig &c) {
    return {
        {"input_res", c.input_res},
        {"input_channels", c.input_channels},
        {"hidden_channels", c.hidden_channels},
        {"n_levels", c.n_levels},
        {"bottleneck_res", c.bottleneck_res},
        {"out_channels", c.out_channels},
        {"modconv_kernel", c.modconv_kernel},
        {"sel_kernel", c.sel_kernel},
        {"latent_dim", c.latent_dim},
        {"bev_channels", c.bev_channels},
        {"bev_feat_channels", c.bev_feat_channels},
        {"mlp_hidden", c.mlp_hidden},
        {"pe", {{"n_freqs", c.pe_cfg.n_freqs}, {"base", c.pe_cfg.base}}},
        {"lift_mode", lift_mode_name(c.lift_mode)},
        {"use_lowpass", c.use_lowpass},
        {"use_sel", c.use_sel},
        {"use_skips", c.use_skips},
        {"use_view_dir", c.use_view_dir},
        {"z_range", {c.z_min, c.z_max}},
        {"fourier_cycles", {c.fourier_min_cycles, c.fourier_max_cycles}},
        {"lowpass", {{"half_width", c.lowpass.half_width}, {"beta", c.lowpass.beta}}},
    };
}

GeneratorConfig
generator_config_from_json(const nlohmann::json &j) {
    GeneratorConfig c;
    try {
        auto get = [&](const char *key, auto &dst) {
            if (j.contains(key)) {
                j.at(key).get_to(dst);
            }
        };
        get("input_res", c.input_res);
        get("input_channels", c.input_channels);
        get("hidden_channels", c.hidden_channels);
        get("n_levels", c.n_levels);
        get("bottleneck_res", c.bottleneck_res);
        get("out_channels", c.out_channels);
        get("modconv_kernel", c.modconv_kernel);
        get("sel_kernel", c.sel_kernel);
        get("latent_dim", c.latent_dim);
        get("bev_channels", c.bev_channels);
        get("bev_feat_channels", c.bev_feat_channels);
        get("mlp_hidden", c.mlp_hidden);
        if (j.contains("pe")) {
            c.pe_cfg.n_freqs = j.at("pe").value("n_freqs", c.pe_cfg.n_freqs);
            c.pe_cfg.base    = j.at("pe").value("base", c.pe_cfg.base);
        }
        if (j.contains("lift_mode")) {
            c.lift_mode = lift_mode_from_string(j.at("lift_mode").get<std::string>());
        }
        get("use_lowpass", c.use_lowpass);
        get("use_sel", c.use_sel);
        get("use_skips", c.use_skips);
        get("use_view_dir", c.use_view_dir);
        if (j.contains("z_range")) {
            c.z_min = j.at("z_range").at(0).get<double>();
            c.z_max = j.at("z_range").at(1).get<double>();
        }
        if (j.contains("fourier_cycles")) {
            c.fourier_min_cycles = j.at("fourier_cycles").at(0).get<double>();
            c.fourier_max_cycles = j.at("fourier_cycles").at(1).get<double>();
        }
        if (j.contains("lowpass")) {
            c.lowpass.half_width = j.at("lowpass").value("half_width", c.lowpass.half_width);
            c.lowpass.beta       = j.at("lowpass").value("beta", c.lowpass.beta);
        }
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("generator config: ") + e.what());
    }
    c.validate();
    return c;
}

LatentCode
sample_latent(std::uint64_t seed, int dim) {
    if (dim < 1) {
        fail(ErrorKind::invalid_argument, "latent dim must be >= 1");
    }
    Rng rng(seed);
    LatentCode s;
    s.s.resize(dim);
    for (auto &v : s.s) {
        v = rng.normal();
    }
    return s;
}

GeneratorParams
init_params(const GeneratorConfig &cfg, std::uint64_t seed) {
    Rng rng(seed);
    return build_params(cfg, seed, &rng);
}

bool
GeneratorParams::operator==(const GeneratorParams &other) const {
    if (!(config == other.config) || init_seed != other.init_seed) {
        return false;
    }
    std::vector<const std::vector<float> *> mine, theirs;
    visit_tensors(const_cast<GeneratorParams &>(*this),
                  [&](const TensorRef &t) { mine.push_back(t.data); });
    visit_tensors(const_cast<GeneratorParams &>(other),
                  [&](const TensorRef &t) { theirs.push_back(t.data); });
    if (mine.size() != theirs.size()) {
        return false;
    }
    for (std::size_t i = 0; i < mine.size(); ++i) {
        const auto &a = *mine[i];
        const auto &b = *theirs[i];
        // Bitwise so that NaN payloads and signed zeros also count.
        if (a.size() != b.size() ||
            (!a.empty() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) != 0)) {
            return false;
        }
    }
    return true;
}

std::vector<std::uint8_t>
encode_weights(const GeneratorParams &p) {
    nlohmann::json tensors = nlohmann::json::array();
    std::vector<float> payload;
    visit_tensors(const_cast<GeneratorParams &>(p), [&](const TensorRef &t) {
        tensors.push_back({{"name", t.name},
                           {"shape", t.shape},
                           {"offset", payload.size()},
                           {"count", t.data->size()}});
        payload.insert(payload.end(), t.data->begin(), t.data->end());
    });
    const nlohmann::json header = {{"config", to_json(p.config)},
                                   {"init_seed", p.init_seed},
                                   {"engine_version", kEngineVersion},
                                   {"tensors", tensors}};
    return encode_container("BERFW001", header, payload);
}

GeneratorParams
decode_weights(std::span<const std::uint8_t> bytes) {
    const Container c = decode_container(bytes, "BERFW001", [](const nlohmann::json &h) {
        std::size_t n = 0;
        for (const auto &t : h.at("tensors")) {
            n += t.at("count").get<std::size_t>();
        }
        return n;
    });
    try {
        const GeneratorConfig cfg = generator_config_from_json(c.header.at("config"));
        const auto seed           = c.header.at("init_seed").get<std::uint64_t>();
        GeneratorParams p         = build_params(cfg, seed, nullptr);
        const auto &tensors       = c.header.at("tensors");
        std::size_t idx           = 0;
        visit_tensors(p, [&](const TensorRef &t) {
            if (idx >= tensors.size()) {
                fail(ErrorKind::invalid_argument, "weight file is missing tensor " + t.name);
            }
            const auto &e = tensors[idx++];
            if (e.at("name").get<std::string>() != t.name ||
                e.at("shape").get<std::vector<int>>() != t.shape ||
                e.at("count").get<std::size_t>() != t.data->size()) {
                fail(ErrorKind::invalid_argument,
                     "weight tensor " + t.name + " does not match the stored config");
            }
            const auto off = e.at("offset").get<std::size_t>();
            if (off + t.data->size() > c.payload.size()) {
                fail(ErrorKind::invalid_argument, "weight tensor " + t.name + " out of bounds");
            }
            std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(off), t.data->size(),
                        t.data->begin());
        });
        if (idx != tensors.size()) {
            fail(ErrorKind::invalid_argument, "weight file has unexpected extra tensors");
        }
        return p;
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("weight header: ") + e.what());
    }
}

void
save_weights(const GeneratorParams &p, const std::string &path) {
    write_file(path, encode_weights(p));
}

GeneratorParams
load_weights(const std::string &path) {
    return decode_weights(read_file(path));
}

// ---------------------------------------------------------------------------

FeatureGrid
conv2d(const FeatureGrid &x, const ConvLayer &layer, bool activate) {
    return convolve(x, layer.kernel, layer.cin, layer.cout, to_double(layer.weight),
                    to_double(layer.bias), activate);
}

FeatureGrid
conv1x1(const FeatureGrid &x, const DenseLayer &layer) {
    return convolve(x, 1, layer.in, layer.out, to_double(layer.weight), to_double(layer.bias),
                    false);
}

FeatureGrid
concat_channels(const FeatureGrid &a, const FeatureGrid &b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        fail(ErrorKind::invalid_argument, "concat needs equal spatial dims");
    }
    const int ca = a.channels(), cb = b.channels();
    FeatureGrid out(a.height(), a.width(), ca + cb, a.world_to_grid());
    for (int i = 0; i < a.height(); ++i) {
        for (int j = 0; j < a.width(); ++j) {
            std::copy_n(a.pixel(i, j), ca, out.pixel(i, j));
            std::copy_n(b.pixel(i, j), cb, out.pixel(i, j) + ca);
        }
    }
    return out;
}

FeatureGrid
bev_encode(const GeneratorParams &params, const BevMap &b) {
    if (b.channels() != params.bev_conv1.cin) {
        fail(ErrorKind::invalid_argument,
             "BEV has " + std::to_string(b.channels()) + " channels, encoder expects " +
                 std::to_string(params.bev_conv1.cin));
    }
    std::vector<double> data(b.grid().begin(), b.grid().end());
    const FeatureGrid x(b.height(), b.width(), b.channels(), std::move(data), b.world_to_grid());
    return conv2d(conv2d(x, params.bev_conv1, true), params.bev_conv2, false);
}

FeatureGrid
instance_norm(const FeatureGrid &a) {
    const int C      = a.channels();
    const double n   = static_cast<double>(a.height()) * a.width();
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    const auto d = a.data();
    for (std::size_t p = 0; p < d.size(); p += C) {
        for (int c = 0; c < C; ++c) {
            mean[c] += d[p + c];
        }
    }
    for (auto &m : mean) {
        m /= n;
    }
    for (std::size_t p = 0; p < d.size(); p += C) {
        for (int c = 0; c < C; ++c) {
            const double e = d[p + c] - mean[c];
            var[c] += e * e;
        }
    }
    std::vector<double> inv(C);
    for (int c = 0; c < C; ++c) {
        inv[c] = 1.0 / std::sqrt(var[c] / n + kNormEps);
    }
    FeatureGrid out(a.height(), a.width(), C, a.world_to_grid());
    auto o = out.data();
    for (std::size_t p = 0; p < d.size(); p += C) {
        for (int c = 0; c < C; ++c) {
            o[p + c] = (d[p + c] - mean[c]) * inv[c];
        }
    }
    return out;
}

FeatureGrid
sel(const FeatureGrid &a, const FeatureGrid &bev_feat, const SelLayer &layer) {
    if (a.height() != bev_feat.height() || a.width() != bev_feat.width()) {
        fail(ErrorKind::invalid_argument,
             "SEL resolution mismatch: features " + std::to_string(a.height()) + "x" +
                 std::to_string(a.width()) + ", BEV " + std::to_string(bev_feat.height()) + "x" +
                 std::to_string(bev_feat.width()));
    }
    if (layer.gamma.out != a.channels() || layer.beta.out != a.channels()) {
        fail(ErrorKind::invalid_argument, "SEL head width does not match feature channels");
    }
    const FeatureGrid gamma = conv1x1(bev_feat, layer.gamma);
    const FeatureGrid beta  = conv1x1(bev_feat, layer.beta);
    FeatureGrid out         = instance_norm(a);
    auto o                  = out.data();
    const auto g            = gamma.data();
    const auto bt           = beta.data();
    for (std::size_t k = 0; k < o.size(); ++k) {
        o[k] = (1.0 + g[k]) * o[k] + bt[k];
    }
    return out;
}

std::vector<double>
style_vector(const DenseLayer &affine, const LatentCode &s) {
    if (static_cast<int>(s.s.size()) != affine.in) {
        fail(ErrorKind::invalid_argument, "latent has " + std::to_string(s.s.size()) +
                                              " dims, style affine expects " +
                                              std::to_string(affine.in));
    }
    std::vector<double> out(affine.bias.begin(), affine.bias.end());
    for (int i = 0; i < affine.in; ++i) {
        const double v = s.s[i];
        for (int o = 0; o < affine.out; ++o) {
            out[o] += v * affine.weight[static_cast<std::size_t>(i) * affine.out + o];
        }
    }
    return out;
}

FeatureGrid
modconv(const FeatureGrid &a, std::span<const double> style, const ConvLayer &conv) {
    if (static_cast<int>(style.size()) != conv.cin) {
        fail(ErrorKind::invalid_argument, "style width does not match conv input channels");
    }
    const int k = conv.kernel, cin = conv.cin, cout = conv.cout;
    std::vector<double> w(conv.weight.size());
    for (int t = 0; t < k * k; ++t) {
        for (int ci = 0; ci < cin; ++ci) {
            for (int co = 0; co < cout; ++co) {
                const std::size_t idx = (static_cast<std::size_t>(t) * cin + ci) * cout + co;
                w[idx]                = style[ci] * conv.weight[idx];
            }
        }
    }
    std::vector<double> sumSq(cout, 0.0);
    for (std::size_t idx = 0; idx < w.size(); ++idx) {
        sumSq[idx % cout] += w[idx] * w[idx];
    }
    for (std::size_t idx = 0; idx < w.size(); ++idx) {
        w[idx] /= std::sqrt(sumSq[idx % cout] + 1e-8);
    }
    return convolve(a, k, cin, cout, w, to_double(conv.bias), true);
}

FeatureGrid
modconv(const FeatureGrid &a, const LatentCode &s, const ModConvLayer &layer) {
    const auto style = style_vector(layer.style, s);
    return modconv(a, style, layer.conv);
}

FeatureGrid
unet_forward(const GeneratorParams &params, const BevMap &b, const LatentCode &s,
             const WindowSpec &window) {
    const GeneratorConfig &cfg = params.config;
    if (b.height() != cfg.input_res || b.width() != cfg.input_res) {
        fail(ErrorKind::invalid_argument,
             "BEV is " + std::to_string(b.height()) + "x" + std::to_string(b.width()) +
                 ", generator expects " + std::to_string(cfg.input_res) + "x" +
                 std::to_string(cfg.input_res));
    }
    if (window.h != b.height() || window.w != b.width()) {
        fail(ErrorKind::invalid_argument, "window size must equal the BEV size");
    }
    const int L       = cfg.n_levels;
    const double sc   = b.world_to_grid().scale;
    const auto fcfg   = default_fourier(cfg.input_channels, sc, cfg.fourier_min_cycles,
                                        cfg.fourier_max_cycles);
    FeatureGrid x     = fourier_grid(fcfg, window, WorldToGrid{sc, 0.0, 0.0});
    x.set_world_to_grid(b.world_to_grid());

    std::vector<FeatureGrid> bev(L + 1);
    bev[0] = bev_encode(params, b);
    for (int l = 1; l <= L; ++l) {
        bev[l] = downsample(bev[l - 1], 2, cfg.use_lowpass, cfg.lowpass);
    }
    if (!cfg.use_sel) {
        x = concat_channels(x, bev[0]);
    }

    std::vector<FeatureGrid> skips(L);
    for (int l = 1; l <= L; ++l) {
        skips[l - 1]          = x;
        const BlockParams &bp = params.encoders[l - 1];
        x                     = downsample(x, 2, cfg.use_lowpass, cfg.lowpass);
        if (cfg.use_sel) {
            x = sel(x, bev[l], bp.sel);
        }
        x = modconv(x, s, bp.conv1);
        x = modconv(x, s, bp.conv2);
    }
    for (int l = L - 1; l >= 0; --l) {
        const BlockParams &bp = params.decoders[L - 1 - l];
        x                     = upsample(x, 2);
        if (cfg.use_skips) {
            x = concat_channels(x, skips[l]);
        }
        if (cfg.use_sel) {
            x = sel(x, bev[l], bp.sel);
        }
        x = modconv(x, s, bp.conv1);
        x = modconv(x, s, bp.conv2);
    }
    FeatureGrid plane = conv1x1(x, params.to_plane);
    plane.set_world_to_grid(b.world_to_grid());
    return plane;
}

// ---------------------------------------------------------------------------

FieldMlp::Dense
FieldMlp::convert(const DenseLayer &layer) {
    Dense d;
    d.in  = layer.in;
    d.out = layer.out;
    d.w.resize(static_cast<std::size_t>(d.in) * d.out);
    for (int i = 0; i < d.in; ++i) {
        for (int o = 0; o < d.out; ++o) {
            d.w[static_cast<std::size_t>(o) * d.in + i] =
                layer.weight[static_cast<std::size_t>(i) * d.out + o];
        }
    }
    d.b.assign(layer.bias.begin(), layer.bias.end());
    return d;
}

FieldMlp::FieldMlp(const GeneratorParams &params)
    : mCfg(params.config), mHidden1(convert(params.mlp.hidden1)),
      mHidden2(convert(params.mlp.hidden2)), mSigma(convert(params.mlp.sigma)),
      mColor(convert(params.mlp.color)) {}

namespace {

void
apply_dense(const std::vector<double> &w, const std::vector<double> &b, int in, int out,
            const double *x, double *y, bool act) {
    for (int o = 0; o < out; ++o) {
        const double *row = w.data() + static_cast<std::size_t>(o) * in;
        double acc        = b[o];
        for (int i = 0; i < in; ++i) {
            acc += row[i] * x[i];
        }
        y[o] = act ? leaky(acc) : acc;
    }
}

} // namespace

FieldSample
FieldMlp::heads(const double *h1, const Vec3 &dir) const {
    thread_local std::vector<double> h2;
    h2.resize(mColor.in);
    apply_dense(mHidden2.w, mHidden2.b, mHidden2.in, mHidden2.out, h1, h2.data(), true);
    if (mCfg.use_view_dir) {
        h2[mHidden2.out + 0] = dir.x;
        h2[mHidden2.out + 1] = dir.y;
        h2[mHidden2.out + 2] = dir.z;
    }
    double sigmaPre = 0.0;
    apply_dense(mSigma.w, mSigma.b, mSigma.in, 1, h2.data(), &sigmaPre, false);
    double rgb[3];
    apply_dense(mColor.w, mColor.b, mColor.in, 3, h2.data(), rgb, false);

    FieldSample out;
    out.sigma = softplus(sigmaPre);
    for (int k = 0; k < 3; ++k) {
        out.color[k] = sigmoid(rgb[k]);
    }
    return out;
}

FieldSample
FieldMlp::evaluate(std::span<const double> features, double z, const Vec3 &dir) const {
    const int C = mCfg.out_channels;
    if (static_cast<int>(features.size()) != C) {
        fail(ErrorKind::invalid_argument, "MLP expects " + std::to_string(C) + " plane features");
    }
    const int P = mCfg.pe_cfg.dims();
    thread_local std::vector<double> pz, in, h1;
    pz.resize(P);
    in.resize(mHidden1.in);
    h1.resize(mHidden1.out);
    pe(z, mCfg.pe_cfg, pz);
    if (mCfg.lift_mode == LiftMode::outer_product) {
        for (int c = 0; c < C; ++c) {
            for (int k = 0; k < P; ++k) {
                in[static_cast<std::size_t>(c) * P + k] = features[c] * pz[k];
            }
        }
    } else {
        std::copy(features.begin(), features.end(), in.begin());
        std::copy(pz.begin(), pz.end(), in.begin() + C);
    }
    apply_dense(mHidden1.w, mHidden1.b, mHidden1.in, mHidden1.out, in.data(), h1.data(), true);
    return heads(h1.data(), dir);
}

void
FieldMlp::evaluate_column(std::span<const double> features, std::span<const double> zs,
                          const Vec3 &dir, std::span<FieldSample> out) const {
    const int C = mCfg.out_channels;
    if (static_cast<int>(features.size()) != C) {
        fail(ErrorKind::invalid_argument, "MLP expects " + std::to_string(C) + " plane features");
    }
    const int P = mCfg.pe_cfg.dims();
    const int H = mHidden1.out;
    const int in = mHidden1.in;
    // Per pe slot k: basis[k][o] = sum_c W1[o][slot(c, k)] * f_c.
    thread_local std::vector<double> basis, base, pz, h1;
    pz.resize(P);
    h1.resize(H);
    base.assign(mHidden1.b.begin(), mHidden1.b.end());
    if (mCfg.lift_mode == LiftMode::outer_product) {
        basis.assign(static_cast<std::size_t>(P) * H, 0.0);
        for (int o = 0; o < H; ++o) {
            const double *row = mHidden1.w.data() + static_cast<std::size_t>(o) * in;
            for (int c = 0; c < C; ++c) {
                const double f = features[c];
                for (int k = 0; k < P; ++k) {
                    basis[static_cast<std::size_t>(k) * H + o] += row[c * P + k] * f;
                }
            }
        }
    } else {
        basis.assign(static_cast<std::size_t>(P) * H, 0.0);
        for (int o = 0; o < H; ++o) {
            const double *row = mHidden1.w.data() + static_cast<std::size_t>(o) * in;
            for (int c = 0; c < C; ++c) {
                base[o] += row[c] * features[c];
            }
            for (int k = 0; k < P; ++k) {
                basis[static_cast<std::size_t>(k) * H + o] = row[C + k];
            }
        }
    }
    for (std::size_t s = 0; s < zs.size(); ++s) {
        pe(zs[s], mCfg.pe_cfg, pz);
        std::copy(base.begin(), base.end(), h1.begin());
        for (int k = 0; k < P; ++k) {
            const double v   = pz[k];
            const double *bk = basis.data() + static_cast<std::size_t>(k) * H;
            for (int o = 0; o < H; ++o) {
                h1[o] += v * bk[o];
            }
        }
        for (auto &v : h1) {
            v = leaky(v);
        }
        out[s] = heads(h1.data(), dir);
    }
}

FieldSample
lift_and_query(const FeatureGrid &plane, const FieldMlp &mlp, double x, double y, double z,
               const Vec3 &dir) {
    std::vector<double> f(plane.channels());
    bilinear_sample(plane, x, y, f);
    return mlp.evaluate(f, z, dir);
}

NeuralField::NeuralField(std::shared_ptr<const FeatureGrid> plane,
                         std::shared_ptr<const FieldMlp> mlp)
    : mPlane(std::move(plane)), mMlp(std::move(mlp)) {
    if (!mPlane || !mMlp) {
        fail(ErrorKind::invalid_argument, "neural field needs a plane and an MLP");
    }
    if (mPlane->channels() != mMlp->config().out_channels) {
        fail(ErrorKind::invalid_argument, "plane channels do not match the MLP");
    }
}

FieldSample
NeuralField::query_at(const Vec3 &anchor, const Vec3 &offset, const Vec3 &dir) const {
    const Vec3 p = anchor + offset;
    return lift_and_query(*mPlane, *mMlp, p.x, p.y, p.z, dir);
}

void
NeuralField::query_ray(const Vec3 &anchor, const Vec3 &dir, std::span<const double> ts,
                       std::span<FieldSample> out) const {
    std::vector<double> f(mPlane->channels());
    if (dir.x == 0.0 && dir.y == 0.0) {
        // Vertical ray: one plane lookup serves every sample.
        thread_local std::vector<double> zs;
        zs.resize(ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i) {
            zs[i] = anchor.z + dir.z * ts[i];
        }
        bilinear_sample(*mPlane, anchor.x, anchor.y, f);
        mMlp->evaluate_column(f, zs, dir, out);
        return;
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const Vec3 p = anchor + dir * ts[i];
        bilinear_sample(*mPlane, p.x, p.y, f);
        out[i] = mMlp->evaluate(f, p.z, dir);
    }
}

std::shared_ptr<NeuralField>
neural_field(const GeneratorParams &params, const BevMap &b, const LatentCode &s,
             const WindowSpec &window) {
    auto plane = std::make_shared<const FeatureGrid>(unet_forward(params, b, s, window));
    auto mlp   = std::make_shared<const FieldMlp>(params);
    return std::make_shared<NeuralField>(std::move(plane), std::move(mlp));
}

double
softplus(double x) {
    // log1p(exp(x)) without overflow for large x.
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double
sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace bevfield
