// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include "bevfield/bevmap.hpp"
#include "bevfield/container.hpp"
#include "bevfield/generator.hpp"
#include "bevfield/image_io.hpp"
#include "bevfield/metrics.hpp"
#include "bevfield/pipeline.hpp"
#include "bevfield/renderer.hpp"
#include "bevfield/service.hpp"
#include "bevfield/stitcher.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace bevfield::cli {

namespace {

using json = nlohmann::json;
using FT   = FieldType;

const Field kSeed{"seed", FT::unsigned_int, 0, "master seed"};
const Field kThreads{"threads", FT::integer, 0, "worker cap, 0 = all cores"};

std::vector<Field>
with_common(std::vector<Field> f) {
    f.insert(f.begin(), kThreads);
    f.insert(f.begin(), kSeed);
    return f;
}

std::vector<Field>
field_fields() {
    return {
        {"bev", FT::string, "", "input .bev file"},
        {"mode", FT::string, "procedural", "procedural | neural"},
        {"weights", FT::string, "", "neural weight file; empty = random init from --init-seed"},
        {"init_seed", FT::unsigned_int, 0, "weight init seed when no weight file is given"},
    };
}

std::vector<Field>
stitch_fields() {
    std::vector<Field> f = field_fields();
    const std::vector<Field> more = {
        {"n_step", FT::integer, 10, "BEV pixels per slide"},
        {"window_h", FT::integer, -1, "window rows, -1 = map height"},
        {"window_w", FT::integer, -1, "window columns, -1 = min(map width, map height)"},
        {"frame_h", FT::integer, 64, "frame rows"},
        {"frame_w", FT::integer, 64, "frame columns"},
        {"f_norm", FT::real, 1.0, "normalized focal length"},
        {"axis", FT::string, "x", "traversal axis, x | y"},
        {"cross_origin", FT::integer, 0, "window origin across the axis"},
        {"rig", FT::string, "side", "side | top_down"},
        {"n_samples", FT::integer, 32, "samples per ray"},
        {"ssaa", FT::integer, 1, "supersampling factor"},
    };
    f.insert(f.end(), more.begin(), more.end());
    return f;
}

std::vector<CommandSpec>
build_commands() {
    std::vector<CommandSpec> out;
    out.push_back({"gen-bev",
                   "sample a scene and write scene.bev",
                   with_common({
                       {"n_min", FT::integer, 3, "minimum object count"},
                       {"n_max", FT::integer, 8, "maximum object count"},
                       {"height", FT::integer, 64, "map rows"},
                       {"width", FT::integer, 64, "map columns"},
                       {"margin_px", FT::integer, -1, "empty border, -1 = min(height, width) / 4"},
                       {"schema", FT::string, "onehot_color_shape", "onehot_color_shape | occupancy"},
                       {"scale", FT::real, 1.0, "pixels per world unit"},
                   })});
    {
        std::vector<Field> f = field_fields();
        const std::vector<Field> more = {
            {"width", FT::integer, -1, "image columns, -1 = map width"},
            {"height", FT::integer, -1, "image rows, -1 = map height"},
            {"ssaa", FT::integer, 1, "supersampling factor"},
            {"n_samples", FT::integer, 32, "samples per ray"},
            {"camera", FT::string, "", "camera JSON file; empty = top-down over the map"},
        };
        f.insert(f.end(), more.begin(), more.end());
        out.push_back({"render", "render one image of a .bev scene", with_common(f)});
    }
    out.push_back({"traverse", "slide a window over a map and write frames, panorama and report",
                   with_common(stitch_fields())});
    {
        std::vector<Field> f = stitch_fields();
        f.push_back({"n_steps", FT::int_list, json::array(),
                     "n_step sweep, one panorama each; empty = --n-step"});
        out.push_back({"stitch", "write stitched panoramas, optionally for an n_step sweep",
                       with_common(f)});
    }
    {
        std::vector<Field> f = field_fields();
        const std::vector<Field> more = {
            {"latents", FT::uint_list, json::array({0, 1, 2}), "latent seeds"},
            {"shifts", FT::int_list, json::array({1, 2, 4, 8}), "BEV pixel shifts"},
            {"mapping", FT::integer, 1, "image pixels per BEV pixel"},
            {"crop", FT::integer, -1, "crop border, -1 = filter half support + max shift"},
            {"n_samples", FT::integer, 16, "samples per ray"},
        };
        f.insert(f.end(), more.begin(), more.end());
        out.push_back({"eqt", "measure translation equivariance (EQT)", with_common(f)});
    }
    out.push_back({"ablate",
                   "EQT table over generator variants and weight seeds; --seed picks the scene",
                   with_common({
                       {"weight_seeds", FT::uint_list, json::array({0, 1, 2, 3, 4}), "weight seeds"},
                       {"latents", FT::uint_list, json::array({0, 1, 2}), "latent seeds"},
                       {"shifts", FT::int_list, json::array({1, 2, 4, 8}), "BEV pixel shifts"},
                       {"n_samples", FT::integer, 16, "samples per ray"},
                       {"variants", FT::string_list,
                        json::array({"full", "no_lowpass", "no_sel", "no_padding"}), "variants"},
                   })});
    out.push_back({"serve",
                   "run the HTTP service until SIGINT or SIGTERM",
                   with_common({
                       {"bind", FT::string, "", "host:port; empty = BEVFIELD_BIND or 127.0.0.1:8080"},
                       {"dump", FT::string, "", "session dump written on shutdown, restored on start"},
                   }),
                   false});
    return out;
}

// ---------------------------------------------------------------------------
// Run context
// ---------------------------------------------------------------------------

struct Context {
    json config;
    fs::path out;
    std::ostream &log;
    json outputs = json::array();
    json inputs  = json::array();
    json timings = json::object();

    template <class T>
    T get(const std::string &key) const {
        return config.at(key).get<T>();
    }

    void write(const std::string &rel, std::span<const std::uint8_t> bytes) {
        const fs::path p = out / rel;
        fs::create_directories(p.parent_path());
        write_file(p.string(), bytes);
        outputs.push_back({{"path", rel}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
    }
    void write_text(const std::string &rel, const std::string &text) {
        write(rel, std::span(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
    }
    void write_png(const std::string &rel, const Image &img) { write(rel, encode_png(img)); }

    std::vector<std::uint8_t> read_input(const std::string &key) {
        const std::string path = get<std::string>(key);
        auto bytes             = read_file(path);
        inputs.push_back({{"key", key}, {"path", path}, {"sha256", sha256_hex(bytes)}});
        return bytes;
    }
};

BevMap
input_bev(Context &ctx) {
    if (ctx.get<std::string>("bev").empty()) {
        fail(ErrorKind::invalid_argument, "--bev is required");
    }
    return decode_bev(ctx.read_input("bev"));
}

std::shared_ptr<const GeneratorParams>
input_params(Context &ctx, const BevMap &b) {
    if (!ctx.get<std::string>("weights").empty()) {
        auto p = std::make_shared<const GeneratorParams>(decode_weights(ctx.read_input("weights")));
        if (p->config.input_res != b.height() || p->config.input_res != b.width() ||
            p->config.bev_channels != b.channels()) {
            fail(ErrorKind::invalid_argument, "weights do not match the map size or channels");
        }
        return p;
    }
    return std::make_shared<const GeneratorParams>(
        init_params(generator_config_for(b.spec()), ctx.get<std::uint64_t>("init_seed")));
}

FieldMode
input_mode(const Context &ctx) {
    return field_mode_from_string(ctx.get<std::string>("mode"));
}

std::vector<int>
ints(const json &j) {
    return j.get<std::vector<int>>();
}

std::vector<std::uint64_t>
u64s(const json &j) {
    return j.get<std::vector<std::uint64_t>>();
}

double
ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void
cmd_gen_bev(Context &ctx) {
    RasterSpec spec;
    spec.schema              = schema_from_string(ctx.get<std::string>("schema"));
    spec.h                   = ctx.get<int>("height");
    spec.w                   = ctx.get<int>("width");
    const int margin         = ctx.get<int>("margin_px");
    spec.margin_px           = margin < 0 ? std::min(spec.h, spec.w) / 4 : margin;
    spec.world_to_grid.scale = ctx.get<double>("scale");
    if (spec.h < 1 || spec.w < 1 || !(spec.world_to_grid.scale > 0.0)) {
        fail(ErrorKind::invalid_argument, "map dims and scale must be positive");
    }
    const Palette palette = Palette::clevr();
    spec.n_colors         = palette.size();
    const auto objects = sample_scene(ctx.get<std::uint64_t>("seed"), ctx.get<int>("n_min"),
                                      ctx.get<int>("n_max"), palette, sampling_inside_margin(spec));
    const BevMap b = rasterize(objects, spec);
    ctx.write("scene.bev", encode_bev(b));
    ctx.log << "scene.bev: " << b.height() << "x" << b.width() << "x" << b.channels() << ", "
            << b.objects().size() << " objects\n";
}

void
cmd_render(Context &ctx) {
    const BevMap b = input_bev(ctx);
    RenderSettings rs;
    rs.width     = ctx.get<int>("width") < 0 ? b.width() : ctx.get<int>("width");
    rs.height    = ctx.get<int>("height") < 0 ? b.height() : ctx.get<int>("height");
    rs.ssaa      = ctx.get<int>("ssaa");
    rs.n_samples = ctx.get<int>("n_samples");

    std::shared_ptr<const RadianceField> field;
    GeneratorConfig gc = GeneratorConfig::desk();
    if (input_mode(ctx) == FieldMode::neural) {
        const auto params = input_params(ctx, b);
        gc                = params->config;
        field             = neural_field(*params, b, sample_latent(ctx.get<std::uint64_t>("seed"), gc.latent_dim),
                                         WindowSpec{0, 0, b.height(), b.width()});
    } else {
        field = procedural_field(b.objects(), Palette::clevr());
    }
    Camera cam = bev_camera(b, gc.z_min, gc.z_max);
    if (!ctx.get<std::string>("camera").empty()) {
        const auto bytes = ctx.read_input("camera");
        cam              = camera_from_json(json::parse(bytes.begin(), bytes.end()));
    }
    const auto t0   = std::chrono::steady_clock::now();
    const Image img = render(*field, cam, rs);
    ctx.timings["render_ms"] = ms_since(t0);
    ctx.write_png("render.png", img);
    const json meta = {{"settings", to_json(rs)},
                       {"camera", to_json(cam)},
                       {"hf_energy", high_frequency_energy(img)}};
    ctx.write_text("render_meta.json", meta.dump(2) + "\n");
    ctx.log << "render.png: " << img.height() << "x" << img.width() << "\n";
}

struct StitchSetup {
    BevMap bev;
    FieldFactory factory;
    GeneratorConfig gc;
    LatentCode z;
    RenderSettings rs;
};

StitchSetup
stitch_setup(Context &ctx) {
    BevMap b = input_bev(ctx);
    GeneratorConfig gc = GeneratorConfig::desk();
    FieldFactory factory;
    if (input_mode(ctx) == FieldMode::neural) {
        const auto params = input_params(ctx, b);
        gc                = params->config;
        factory           = neural_factory(params);
    } else {
        factory = procedural_factory(Palette::clevr());
    }
    RenderSettings rs;
    rs.n_samples = ctx.get<int>("n_samples");
    rs.ssaa      = ctx.get<int>("ssaa");
    LatentCode z = sample_latent(ctx.get<std::uint64_t>("seed"), gc.latent_dim);
    return {std::move(b), std::move(factory), gc, std::move(z), rs};
}

StitchConfig
stitch_config(const Context &ctx, const BevMap &b, int n_step) {
    StitchConfig c;
    c.n_step       = n_step;
    c.window_h     = ctx.get<int>("window_h") < 0 ? b.height() : ctx.get<int>("window_h");
    c.window_w     = ctx.get<int>("window_w") < 0 ? std::min(b.width(), b.height())
                                                  : ctx.get<int>("window_w");
    c.frame_h      = ctx.get<int>("frame_h");
    c.frame_w      = ctx.get<int>("frame_w");
    c.f_norm       = ctx.get<double>("f_norm");
    c.axis         = axis_from_string(ctx.get<std::string>("axis"));
    c.cross_origin = ctx.get<int>("cross_origin");
    c.validate();
    return c;
}

CameraRig
rig_for(const Context &ctx, const StitchConfig &c, const StitchSetup &s) {
    const std::string rig = ctx.get<std::string>("rig");
    if (rig == "side") {
        return side_rig(c, s.bev.world_to_grid(), s.gc.z_max);
    }
    if (rig == "top_down") {
        return top_down_rig(c, s.bev.world_to_grid(), s.gc.z_min, s.gc.z_max);
    }
    fail(ErrorKind::invalid_argument, "rig must be side or top_down");
}

json
stitch_report_json(const StitchReport &r, const StitchConfig &c, const CameraRig &rig) {
    json j      = to_json(r);
    j["config"] = to_json(c);
    j["rig"]    = to_json(rig);
    return j;
}

void
cmd_traverse(Context &ctx) {
    const StitchSetup s = stitch_setup(ctx);
    const StitchConfig c = stitch_config(ctx, s.bev, ctx.get<int>("n_step"));
    const CameraRig rig  = rig_for(ctx, c, s);
    const auto t0        = std::chrono::steady_clock::now();
    const auto frames    = traverse(s.factory, s.bev, c, rig, s.z, s.rs);
    ctx.timings["traverse_ms"] = ms_since(t0);
    for (std::size_t k = 0; k < frames.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frames/%05zu.png", k);
        ctx.write_png(name, frames[k]);
    }
    const Image pano = stitch(frames, c);
    ctx.write_png("panorama.png", pano);
    const StitchReport r = make_report(frames, pano, c);
    ctx.write_text("stitch_report.json", stitch_report_json(r, c, rig).dump(2) + "\n");
    ctx.log << frames.size() << " frames, panorama " << pano.height() << "x" << pano.width()
            << " (n_loc " << c.n_loc() << ")\n";
}

void
cmd_stitch(Context &ctx) {
    const StitchSetup s = stitch_setup(ctx);
    std::vector<int> steps = ints(ctx.config.at("n_steps"));
    const bool sweep       = !steps.empty();
    if (!sweep) {
        steps.push_back(ctx.get<int>("n_step"));
    }
    std::map<int, std::pair<Image, StitchConfig>> panos;
    json sweepReport = json::array();
    for (int n : steps) {
        const StitchConfig c = stitch_config(ctx, s.bev, n);
        const CameraRig rig  = rig_for(ctx, c, s);
        const auto t0        = std::chrono::steady_clock::now();
        const auto frames    = traverse(s.factory, s.bev, c, rig, s.z, s.rs);
        ctx.timings["n_step_" + std::to_string(n) + "_ms"] = ms_since(t0);
        Image pano         = stitch(frames, c);
        const std::string dir = sweep ? "n_step_" + std::to_string(n) + "/" : "";
        ctx.write_png(dir + "panorama.png", pano);
        const StitchReport r = make_report(frames, pano, c);
        ctx.write_text(dir + "stitch_report.json", stitch_report_json(r, c, rig).dump(2) + "\n");
        ctx.log << "n_step " << n << ": " << frames.size() << " frames, panorama " << pano.height()
                << "x" << pano.width() << "\n";
        sweepReport.push_back(to_json(r));
        panos.emplace(n, std::make_pair(std::move(pano), c));
    }
    if (sweep) {
        json j = {{"runs", sweepReport}};
        // Serration against the n_step = 1 panorama when it is part of the sweep.
        const auto ref = panos.find(1);
        if (ref != panos.end() && ref->second.second.f_norm == 1.0) {
            json diffs = json::object();
            for (const auto &[n, pc] : panos) {
                diffs[std::to_string(n)] =
                    serration_diff(ref->second.first, ref->second.second, pc.first, pc.second);
            }
            j["serration_mean_abs_diff"] = diffs;
        }
        ctx.write_text("sweep_report.json", j.dump(2) + "\n");
    }
}

void
cmd_eqt(Context &ctx) {
    const BevMap b = input_bev(ctx);
    EqtConfig cfg;
    cfg.latent_seeds = u64s(ctx.config.at("latents"));
    cfg.shifts       = ints(ctx.config.at("shifts"));
    cfg.mapping      = ctx.get<int>("mapping");
    if (ctx.get<int>("crop") >= 0) {
        cfg.crop_border = ctx.get<int>("crop");
    }
    RenderSettings rs;
    rs.n_samples = ctx.get<int>("n_samples");
    EqtGenerator gen;
    GeneratorConfig gc = GeneratorConfig::desk();
    if (input_mode(ctx) == FieldMode::neural) {
        const auto params = input_params(ctx, b);
        gc                = params->config;
        gen               = neural_generator(params, rs, cfg.mapping);
    } else {
        gen = procedural_generator(Palette::clevr(), {}, rs, gc.z_min, gc.z_max, cfg.mapping);
    }
    cfg.latent_dim = gc.latent_dim;
    if (!cfg.crop_border) {
        cfg.crop_border = default_crop_border(gc.lowpass, cfg.shifts, cfg.mapping);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const EqtReport rep = eqt(gen, b, WindowSpec{0, 0, b.height(), b.width()}, cfg);
    ctx.timings["eqt_ms"] = ms_since(t0);
    json j      = to_json(rep);
    j["config"] = to_json(cfg);
    ctx.write_text("eqt_report.json", j.dump(2) + "\n");
    char buf[96];
    std::snprintf(buf, sizeof buf, "EQT %.3f dB%s over %d samples (crop %d)\n", rep.eqt_db,
                  rep.capped ? " (capped)" : "", static_cast<int>(rep.samples.size()), rep.crop_border);
    ctx.log << buf;
}

void
cmd_ablate(Context &ctx) {
    AblationConfig cfg;
    cfg.scene_seed   = ctx.get<std::uint64_t>("seed");
    cfg.weight_seeds = u64s(ctx.config.at("weight_seeds"));
    cfg.latent_seeds = u64s(ctx.config.at("latents"));
    cfg.shifts       = ints(ctx.config.at("shifts"));
    cfg.n_samples    = ctx.get<int>("n_samples");
    cfg.variants.clear();
    for (const auto &v : ctx.config.at("variants")) {
        const std::string name = v.get<std::string>();
        if (name == "full") {
            cfg.variants.push_back(Ablation::full);
        } else if (name == "no_lowpass") {
            cfg.variants.push_back(Ablation::no_lowpass);
        } else if (name == "no_sel") {
            cfg.variants.push_back(Ablation::no_sel);
        } else if (name == "no_padding") {
            cfg.variants.push_back(Ablation::no_padding);
        } else {
            fail(ErrorKind::invalid_argument, "unknown ablation variant '" + name + "'");
        }
    }
    const auto t0 = std::chrono::steady_clock::now();
    const AblationTable table = run_ablation(cfg);
    ctx.timings["ablate_ms"] = ms_since(t0);
    ctx.write_text("ablation.json", table.to_json().dump(2) + "\n");
    const std::string text = table.to_text();
    ctx.write_text("ablation.txt", text);
    ctx.log << text;
}

void
cmd_serve(Context &ctx) {
    ServiceOptions opts = service_options_from_env();
    const std::string bind = ctx.get<std::string>("bind");
    if (!bind.empty()) {
        const auto colon = bind.rfind(':');
        if (colon == std::string::npos) {
            fail(ErrorKind::invalid_argument, "--bind must be host:port");
        }
        opts.host = bind.substr(0, colon);
        opts.port = std::stoi(bind.substr(colon + 1));
    }
    if (!ctx.get<std::string>("dump").empty()) {
        opts.dump_path = ctx.get<std::string>("dump");
    }

    // Signals are taken synchronously by a watcher thread so that shutdown
    // (listener stop, session dump) runs outside signal context.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    Service service(opts);
    const int port = service.bind();
    ctx.log << "listening on http://" << opts.host << ":" << port << "/v1\n" << std::flush;
    std::atomic<bool> signaled{false};
    std::thread watcher([&] {
        int sig = 0;
        sigwait(&set, &sig);
        signaled = true;
        service.stop();
    });
    const auto t0 = std::chrono::steady_clock::now();
    service.listen();
    ctx.timings["served_ms"] = ms_since(t0);
    // Wake the watcher if listen() ended for another reason.
    service.stop();
    if (!signaled) {
        pthread_kill(watcher.native_handle(), SIGTERM);
    }
    watcher.join();
    pthread_sigmask(SIG_UNBLOCK, &set, nullptr);
    ctx.config["resolved_bind"] = opts.host + ":" + std::to_string(port);
    ctx.log << "stopped\n";
}

using Handler = void (*)(Context &);

Handler
handler_for(const std::string &name) {
    static const std::map<std::string, Handler> table = {
        {"gen-bev", cmd_gen_bev}, {"render", cmd_render}, {"traverse", cmd_traverse},
        {"stitch", cmd_stitch},   {"eqt", cmd_eqt},       {"ablate", cmd_ablate},
        {"serve", cmd_serve}};
    return table.at(name);
}

} // namespace

const std::vector<CommandSpec> &
commands() {
    static const std::vector<CommandSpec> all = build_commands();
    return all;
}

const CommandSpec &
command(const std::string &name) {
    for (const auto &c : commands()) {
        if (c.name == name) {
            return c;
        }
    }
    fail(ErrorKind::invalid_argument, "unknown command '" + name + "'");
}

json
default_config(const CommandSpec &spec) {
    json j = json::object();
    for (const auto &f : spec.fields) {
        j[f.key] = f.fallback;
    }
    return j;
}

json
parse_value(const Field &f, const std::string &text) {
    auto parse_list = [&](auto conv) {
        json arr = json::array();
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) {
                arr.push_back(conv(item));
            }
        }
        return arr;
    };
    auto whole = [&](const std::string &s, std::size_t used) {
        if (used != s.size()) {
            throw std::invalid_argument(s);
        }
    };
    try {
        switch (f.type) {
        case FT::integer: {
            std::size_t used = 0;
            const int v      = std::stoi(text, &used);
            whole(text, used);
            return v;
        }
        case FT::unsigned_int: {
            std::size_t used = 0;
            if (!text.empty() && text[0] == '-') {
                throw std::invalid_argument(text);
            }
            const auto v = std::stoull(text, &used);
            whole(text, used);
            return v;
        }
        case FT::real: {
            std::size_t used = 0;
            const double v   = std::stod(text, &used);
            whole(text, used);
            return v;
        }
        case FT::string: return text;
        case FT::boolean:
            if (text == "true" || text == "1") {
                return true;
            }
            if (text == "false" || text == "0") {
                return false;
            }
            throw std::invalid_argument(text);
        case FT::int_list:
            return parse_list([&](const std::string &s) {
                std::size_t used = 0;
                const int v      = std::stoi(s, &used);
                whole(s, used);
                return v;
            });
        case FT::uint_list:
            return parse_list([&](const std::string &s) {
                std::size_t used = 0;
                const auto v     = std::stoull(s, &used);
                whole(s, used);
                return v;
            });
        case FT::string_list: return parse_list([](const std::string &s) { return s; });
        }
    } catch (const std::logic_error &) {
    }
    fail(ErrorKind::invalid_argument, "bad value '" + text + "' for --" + f.key);
}

void
check_config(const CommandSpec &spec, const json &config) {
    if (!config.is_object()) {
        fail(ErrorKind::invalid_argument, "config must be a JSON object");
    }
    for (const auto &[key, value] : config.items()) {
        const bool known = std::any_of(spec.fields.begin(), spec.fields.end(),
                                       [&](const Field &f) { return f.key == key; });
        if (!known) {
            fail(ErrorKind::invalid_argument, "unknown config key '" + key + "' for " + spec.name);
        }
    }
    for (const auto &f : spec.fields) {
        if (!config.contains(f.key)) {
            fail(ErrorKind::invalid_argument, "config is missing '" + f.key + "'");
        }
        const json &v = config.at(f.key);
        bool ok       = false;
        switch (f.type) {
        case FT::integer: ok = v.is_number_integer(); break;
        case FT::unsigned_int: ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); break;
        case FT::real: ok = v.is_number(); break;
        case FT::string: ok = v.is_string(); break;
        case FT::boolean: ok = v.is_boolean(); break;
        case FT::int_list:
        case FT::uint_list:
            ok = v.is_array() && std::all_of(v.begin(), v.end(),
                                             [](const json &e) { return e.is_number_integer(); });
            break;
        case FT::string_list:
            ok = v.is_array() &&
                 std::all_of(v.begin(), v.end(), [](const json &e) { return e.is_string(); });
            break;
        }
        if (!ok) {
            fail(ErrorKind::invalid_argument, "config key '" + f.key + "' has the wrong type");
        }
    }
}

std::string
sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorKind::internal, "SHA-256 failed");
    }
    static const char *hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

std::string
sha256_file(const std::string &path) {
    return sha256_hex(read_file(path));
}

json
run(const std::string &name, const json &config, const std::string &out_dir, std::ostream &log) {
    const CommandSpec &spec = command(name);
    check_config(spec, config);
    set_thread_count(config.at("threads").get<int>());
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        fail(ErrorKind::io, "cannot create output directory " + out_dir + ": " + ec.message());
    }
    Context ctx{config, fs::path(out_dir), log};
    const auto t0 = std::chrono::steady_clock::now();
    handler_for(name)(ctx);
    ctx.timings["total_ms"] = ms_since(t0);

    json seeds = json::object();
    for (const auto &[key, value] : config.items()) {
        if (key.find("seed") != std::string::npos || key == "latents") {
            seeds[key] = value;
        }
    }
    json manifest = {{"command", name},
                     {"engine_version", kEngineVersion},
                     {"config", config},
                     {"seeds", seeds},
                     {"inputs", ctx.inputs},
                     {"outputs", ctx.outputs},
                     {"timings", ctx.timings}};
    if (ctx.config.contains("resolved_bind")) {
        manifest["resolved_bind"] = ctx.config.at("resolved_bind");
    }
    write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
    return manifest;
}

ReplayResult
replay(const std::string &manifest_path, const std::string &out_dir, std::ostream &log) {
    const auto bytes = read_file(manifest_path);
    json recorded;
    try {
        recorded = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed manifest: ") + e.what());
    }
    const std::string name = recorded.at("command").get<std::string>();
    if (!command(name).replayable) {
        fail(ErrorKind::invalid_argument, "'" + name + "' runs are not replayable");
    }
    if (recorded.at("engine_version").get<std::string>() != kEngineVersion) {
        log << "warning: manifest engine version " << recorded.at("engine_version")
            << " differs from " << kEngineVersion << "\n";
    }
    for (const auto &in : recorded.at("inputs")) {
        const std::string path = in.at("path").get<std::string>();
        if (sha256_file(path) != in.at("sha256").get<std::string>()) {
            fail(ErrorKind::invalid_argument, "input " + path + " changed since the recorded run");
        }
    }
    ReplayResult res;
    res.manifest = run(name, recorded.at("config"), out_dir, log);
    std::map<std::string, std::string> now;
    for (const auto &o : res.manifest.at("outputs")) {
        now[o.at("path").get<std::string>()] = o.at("sha256").get<std::string>();
    }
    for (const auto &o : recorded.at("outputs")) {
        const std::string path = o.at("path").get<std::string>();
        const auto it          = now.find(path);
        if (it == now.end() || it->second != o.at("sha256").get<std::string>()) {
            res.ok = false;
            res.mismatches.push_back(path);
        }
        if (it != now.end()) {
            now.erase(it);
        }
    }
    for (const auto &[path, sha] : now) {
        res.ok = false;
        res.mismatches.push_back(path);
    }
    return res;
}

} // namespace bevfield::cli
