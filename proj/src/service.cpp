// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/service.hpp"

#include "bevfield/container.hpp"
#include "bevfield/image_io.hpp"
#include "bevfield/pipeline.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <mutex>
#include <sstream>

namespace bevfield {

namespace {

// Checker cell size in BEV pixels; below one pixel so plain rendering aliases.
constexpr double kCheckerPeriod = 0.37;

std::string
utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

RasterSpec
raster_spec_from_json(const nlohmann::json &j) {
    RasterSpec spec;
    spec.schema    = schema_from_string(j.value("schema", std::string("onehot_color_shape")));
    spec.h         = j.at("h").get<int>();
    spec.w         = j.at("w").get<int>();
    spec.margin_px = j.value("margin_px", std::min(spec.h, spec.w) / 4);
    spec.n_colors  = j.value("n_colors", Palette::clevr().size());
    if (j.contains("world_to_grid")) {
        const auto &t = j.at("world_to_grid");
        spec.world_to_grid.scale    = t.at("scale").get<double>();
        spec.world_to_grid.offset_x = t.at("offset").at(0).get<double>();
        spec.world_to_grid.offset_y = t.at("offset").at(1).get<double>();
    }
    return spec;
}

} // namespace

std::string
to_string(FieldMode m) {
    return m == FieldMode::neural ? "neural" : "procedural";
}

FieldMode
field_mode_from_string(const std::string &s) {
    if (s == "procedural") {
        return FieldMode::procedural;
    }
    if (s == "neural") {
        return FieldMode::neural;
    }
    fail(ErrorKind::invalid_argument, "unknown field mode '" + s + "'");
}

nlohmann::json
to_json(const Session &s) {
    nlohmann::json j = {{"id", s.id},
                        {"version", s.version},
                        {"mode", to_string(s.mode)},
                        {"latent_seed", s.latent_seed},
                        {"ground", s.checker_ground ? "checker" : "plain"},
                        {"bev", bev_header(s.bev)},
                        {"nonzero_pixels", s.bev.nonzero_pixels()},
                        {"camera", to_json(session_camera(s))},
                        {"camera_override", s.camera.has_value()},
                        {"created_at", s.created_at},
                        {"last_modified", s.last_modified}};
    if (s.mode == FieldMode::neural) {
        j["init_seed"]  = s.init_seed;
        j["gen_config"] = to_json(s.gen_config);
    }
    return j;
}

Camera
session_camera(const Session &s) {
    return s.camera ? *s.camera : bev_camera(s.bev, s.gen_config.z_min, s.gen_config.z_max);
}

Session
make_session(const std::string &id, const nlohmann::json &req) {
    try {
        const RasterSpec spec = raster_spec_from_json(req);
        if (spec.h < 1 || spec.w < 1) {
            fail(ErrorKind::invalid_argument, "map dims must be positive");
        }
        if (spec.n_colors != Palette::clevr().size()) {
            fail(ErrorKind::invalid_argument, "sessions use the 8-color palette");
        }
        std::vector<SceneObject> objects;
        if (req.contains("seed") && !req.at("seed").is_null()) {
            objects = sample_scene(req.at("seed").get<std::uint64_t>(), req.value("n_min", 3),
                                   req.value("n_max", 8), Palette::clevr(),
                                   sampling_inside_margin(spec));
        }
        const FieldMode mode = field_mode_from_string(req.value("mode", std::string("procedural")));
        const GeneratorConfig gc =
            mode == FieldMode::neural ? generator_config_for(spec) : GeneratorConfig::desk();
        const std::uint64_t initSeed = req.value("init_seed", std::uint64_t{0});
        std::shared_ptr<const GeneratorParams> params;
        if (mode == FieldMode::neural) {
            params = std::make_shared<const GeneratorParams>(init_params(gc, initSeed));
        }
        const std::string ground = req.value("ground", std::string("plain"));
        if (ground != "plain" && ground != "checker") {
            fail(ErrorKind::invalid_argument, "ground must be 'plain' or 'checker'");
        }
        const std::string now = utc_now();
        return Session{.id             = id,
                       .version        = 0,
                       .bev            = rasterize(objects, spec),
                       .mode           = mode,
                       .latent_seed    = req.value("latent_seed", std::uint64_t{0}),
                       .init_seed      = initSeed,
                       .checker_ground = ground == "checker",
                       .gen_config     = gc,
                       .camera         = std::nullopt,
                       .params         = std::move(params),
                       .created_at     = now,
                       .last_modified  = now};
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed session request: ") + e.what());
    }
}

std::shared_ptr<const Session>
SessionStore::create(const nlohmann::json &request) {
    std::string id;
    {
        std::lock_guard lock(mMutex);
        char buf[32];
        std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(mNextId++));
        id = buf;
    }
    auto e     = std::make_shared<Entry>();
    e->current = std::make_shared<const Session>(make_session(id, request));
    std::lock_guard lock(mMutex);
    mEntries[id] = e;
    return e->current;
}

std::shared_ptr<SessionStore::Entry>
SessionStore::entry(const std::string &id) const {
    std::lock_guard lock(mMutex);
    const auto it = mEntries.find(id);
    if (it == mEntries.end()) {
        fail(ErrorKind::not_found, "unknown session '" + id + "'");
    }
    return it->second;
}

std::shared_ptr<const Session>
SessionStore::get(const std::string &id) const {
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    return e->current;
}

std::shared_ptr<const Session>
SessionStore::apply_edits(const std::string &id, const std::vector<Edit> &edits) {
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    BevMap bev = e->current->bev;
    for (const auto &edit : edits) {
        bev = apply_edit(bev, edit);
    }
    auto next           = std::make_shared<Session>(*e->current);
    next->bev           = std::move(bev);
    next->version      += edits.size();
    next->last_modified = utc_now();
    e->current          = next;
    return next;
}

std::shared_ptr<const Session>
SessionStore::set_camera(const std::string &id, const std::optional<Camera> &cam) {
    if (cam) {
        cam->validate();
    }
    const auto e = entry(id);
    std::lock_guard lock(e->mutex);
    auto next           = std::make_shared<Session>(*e->current);
    next->camera        = cam;
    next->version      += 1;
    next->last_modified = utc_now();
    e->current          = next;
    return next;
}

std::size_t
SessionStore::size() const {
    std::lock_guard lock(mMutex);
    return mEntries.size();
}

nlohmann::json
SessionStore::dump() const {
    std::vector<std::shared_ptr<Entry>> entries;
    {
        std::lock_guard lock(mMutex);
        for (const auto &[id, e] : mEntries) {
            entries.push_back(e);
        }
    }
    nlohmann::json sessions = nlohmann::json::array();
    for (const auto &e : entries) {
        std::shared_ptr<const Session> s;
        {
            std::lock_guard lock(e->mutex);
            s = e->current;
        }
        nlohmann::json j = to_json(*s);
        j["init_seed"]   = s->init_seed;
        j["camera"]      = s->camera ? to_json(*s->camera) : nlohmann::json(nullptr);
        sessions.push_back(j);
    }
    return {{"engine_version", kEngineVersion}, {"sessions", sessions}};
}

void
SessionStore::restore(const nlohmann::json &dump) {
    try {
        for (const auto &j : dump.at("sessions")) {
            const RasterSpec spec = raster_spec_from_json(j.at("bev"));
            std::vector<SceneObject> objects;
            for (const auto &o : j.at("bev").at("objects")) {
                objects.push_back(object_from_json(o));
            }
            nlohmann::json req = {{"schema", to_string(spec.schema)},
                                  {"h", spec.h},
                                  {"w", spec.w},
                                  {"margin_px", spec.margin_px},
                                  {"mode", j.at("mode")},
                                  {"latent_seed", j.at("latent_seed")},
                                  {"init_seed", j.value("init_seed", std::uint64_t{0})},
                                  {"ground", j.value("ground", std::string("plain"))}};
            const std::string id = j.at("id").get<std::string>();
            Session s            = make_session(id, req);
            s.bev                = rasterize(objects, spec);
            s.version            = j.at("version").get<std::uint64_t>();
            s.created_at         = j.at("created_at").get<std::string>();
            s.last_modified      = j.at("last_modified").get<std::string>();
            if (!j.at("camera").is_null()) {
                s.camera = camera_from_json(j.at("camera"));
            }
            auto e     = std::make_shared<Entry>();
            e->current = std::make_shared<const Session>(std::move(s));
            std::lock_guard lock(mMutex);
            mEntries[id] = e;
            // Keep new ids clear of restored ones.
            if (id.size() > 1 && id[0] == 's') {
                mNextId = std::max<std::uint64_t>(mNextId, std::stoull(id.substr(1)) + 1);
            }
        }
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed session dump: ") + e.what());
    }
}

namespace {

std::shared_ptr<const RadianceField>
session_field(const Session &s, std::uint64_t latentSeed) {
    if (s.mode == FieldMode::neural) {
        const LatentCode z = sample_latent(latentSeed, s.gen_config.latent_dim);
        return neural_field(*s.params, s.bev, z, WindowSpec{0, 0, s.bev.height(), s.bev.width()});
    }
    ProceduralOptions opts;
    if (s.checker_ground) {
        opts.checker        = true;
        opts.checker_period = kCheckerPeriod / s.bev.world_to_grid().scale;
    }
    return procedural_field(s.bev.objects(), Palette::clevr(), opts);
}

} // namespace

RenderResult
render_session(const Session &s, const RenderRequest &req) {
    RenderSettings rs;
    rs.width     = req.width.value_or(s.bev.width());
    rs.height    = req.height.value_or(s.bev.height());
    rs.ssaa      = req.ssaa;
    rs.n_samples = req.n_samples;
    if (rs.width < 1 || rs.height < 1 || rs.width > 4096 || rs.height > 4096) {
        fail(ErrorKind::invalid_argument, "render size must lie in [1, 4096]");
    }
    if (rs.ssaa < 1 || rs.ssaa > 16 || rs.n_samples < 1 || rs.n_samples > 1024) {
        fail(ErrorKind::invalid_argument, "ssaa must lie in [1, 16] and n_samples in [1, 1024]");
    }
    const std::uint64_t seed = req.latent_seed.value_or(s.latent_seed);
    const Camera cam         = req.camera ? *req.camera : session_camera(s);
    cam.validate();

    const auto t0    = std::chrono::steady_clock::now();
    const auto field = session_field(s, seed);
    Image img        = render(*field, cam, rs);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json meta = {{"session", s.id},
                           {"version", s.version},
                           {"mode", to_string(s.mode)},
                           {"latent_seed", seed},
                           {"settings", to_json(rs)},
                           {"camera", to_json(cam)},
                           {"hf_energy", high_frequency_energy(img)},
                           {"render_ms", ms}};
    return {std::move(img), std::move(meta)};
}

StitchRequest
stitch_request_from_json(const nlohmann::json &j, const Session &s) {
    try {
        nlohmann::json c = j;
        if (!c.contains("window_h")) {
            c["window_h"] = s.bev.height();
        }
        if (!c.contains("window_w")) {
            c["window_w"] = std::min(s.bev.width(), s.bev.height());
        }
        StitchRequest r;
        r.config    = stitch_config_from_json(c);
        r.rig       = j.value("rig", r.rig);
        r.n_samples = j.value("n_samples", r.n_samples);
        r.ssaa      = j.value("ssaa", r.ssaa);
        if (j.contains("latent_seed")) {
            r.latent_seed = j.at("latent_seed").get<std::uint64_t>();
        }
        if (r.rig != "side" && r.rig != "top_down") {
            fail(ErrorKind::invalid_argument, "rig must be 'side' or 'top_down'");
        }
        if (r.ssaa < 1 || r.ssaa > 16 || r.n_samples < 1 || r.n_samples > 1024) {
            fail(ErrorKind::invalid_argument, "ssaa must lie in [1, 16] and n_samples in [1, 1024]");
        }
        return r;
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed stitch request: ") + e.what());
    }
}

StitchResult
stitch_session(const Session &s, const StitchRequest &req, const Progress &progress) {
    const StitchConfig &cfg = req.config;
    const WorldToGrid &w2g  = s.bev.world_to_grid();
    const CameraRig rig     = req.rig == "side" ? side_rig(cfg, w2g, s.gen_config.z_max)
                                                : top_down_rig(cfg, w2g, s.gen_config.z_min,
                                                               s.gen_config.z_max);
    const FieldFactory factory = s.mode == FieldMode::neural
                                     ? neural_factory(s.params)
                                     : procedural_factory(Palette::clevr());
    RenderSettings rs;
    rs.n_samples = req.n_samples;
    rs.ssaa      = req.ssaa;
    const LatentCode z =
        sample_latent(req.latent_seed.value_or(s.latent_seed), s.gen_config.latent_dim);
    const auto frames = traverse(factory, s.bev, cfg, rig, z, rs, progress);
    Image pano        = stitch(frames, cfg);
    StitchReport rep  = make_report(frames, pano, cfg);
    return {std::move(pano), rep};
}

EqtReport
eqt_session(const Session &s, const EqtConfig &cfg, int n_samples) {
    RenderSettings rs;
    rs.n_samples = n_samples;
    const EqtGenerator gen =
        s.mode == FieldMode::neural
            ? neural_generator(s.params, rs)
            : procedural_generator(Palette::clevr(), {}, rs, s.gen_config.z_min, s.gen_config.z_max);
    EqtConfig c  = cfg;
    c.latent_dim = s.gen_config.latent_dim;
    return eqt(gen, s.bev, WindowSpec{0, 0, s.bev.height(), s.bev.width()}, c);
}

// ---------------------------------------------------------------------------
// Jobs
// ---------------------------------------------------------------------------

std::string
to_string(JobQueue::Status s) {
    switch (s) {
    case JobQueue::Status::queued: return "queued";
    case JobQueue::Status::running: return "running";
    case JobQueue::Status::done: return "done";
    case JobQueue::Status::failed: return "failed";
    }
    return "unknown";
}

nlohmann::json
to_json(const JobQueue::Job &j) {
    nlohmann::json out = {{"id", j.id},
                          {"session", j.session_id},
                          {"version", j.version},
                          {"status", to_string(j.status)},
                          {"progress", {{"done", j.done}, {"total", j.total}}}};
    if (j.report) {
        out["report"] = to_json(*j.report);
        out["frames"] = j.report->K;
    }
    if (!j.error.empty()) {
        out["error"] = j.error;
    }
    return out;
}

JobQueue::JobQueue() : mThread([this] { worker(); }) {}

JobQueue::~JobQueue() {
    {
        std::lock_guard lock(mMutex);
        mStopping = true;
    }
    mChanged.notify_all();
    mThread.join();
}

std::string
JobQueue::submit(std::shared_ptr<const Session> snapshot, StitchRequest req) {
    std::string id;
    {
        std::lock_guard lock(mMutex);
        char buf[32];
        std::snprintf(buf, sizeof buf, "j%06llu", static_cast<unsigned long long>(mNextId++));
        id = buf;
        Job j;
        j.id         = id;
        j.session_id = snapshot->id;
        j.version    = snapshot->version;
        mJobs[id]    = j;
        mQueue.push_back({id, std::move(snapshot), std::move(req)});
    }
    mChanged.notify_all();
    return id;
}

JobQueue::Job
JobQueue::get(const std::string &id) const {
    std::lock_guard lock(mMutex);
    const auto it = mJobs.find(id);
    if (it == mJobs.end()) {
        fail(ErrorKind::not_found, "unknown job '" + id + "'");
    }
    return it->second;
}

JobQueue::Job
JobQueue::wait(const std::string &id) const {
    std::unique_lock lock(mMutex);
    const auto it = mJobs.find(id);
    if (it == mJobs.end()) {
        fail(ErrorKind::not_found, "unknown job '" + id + "'");
    }
    mChanged.wait(lock, [&] {
        return it->second.status == Status::done || it->second.status == Status::failed;
    });
    return it->second;
}

void
JobQueue::worker() {
    for (;;) {
        Task task;
        {
            std::unique_lock lock(mMutex);
            mChanged.wait(lock, [&] { return mStopping || !mQueue.empty(); });
            if (mStopping) {
                for (const auto &t : mQueue) {
                    mJobs[t.id].status = Status::failed;
                    mJobs[t.id].error  = "service stopped";
                }
                mQueue.clear();
                mChanged.notify_all();
                return;
            }
            task = std::move(mQueue.front());
            mQueue.pop_front();
            mJobs[task.id].status = Status::running;
        }
        mChanged.notify_all();
        try {
            const auto res = stitch_session(*task.snapshot, task.req, [&](int done, int total) {
                std::lock_guard lock(mMutex);
                mJobs[task.id].done  = done;
                mJobs[task.id].total = total;
            });
            auto png = encode_png(res.panorama);
            std::lock_guard lock(mMutex);
            Job &j         = mJobs[task.id];
            j.report       = res.report;
            j.panorama_png = std::move(png);
            j.status       = Status::done;
        } catch (const std::exception &e) {
            std::lock_guard lock(mMutex);
            mJobs[task.id].status = Status::failed;
            mJobs[task.id].error  = e.what();
        }
        mChanged.notify_all();
    }
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

ServiceOptions
service_options_from_env() {
    ServiceOptions o;
    if (const char *bind = std::getenv("BEVFIELD_BIND")) {
        const std::string b = bind;
        const auto colon    = b.rfind(':');
        if (colon == std::string::npos) {
            fail(ErrorKind::invalid_argument, "BEVFIELD_BIND must be host:port, got '" + b + "'");
        }
        o.host = b.substr(0, colon);
        try {
            o.port = std::stoi(b.substr(colon + 1));
        } catch (const std::exception &) {
            fail(ErrorKind::invalid_argument, "BEVFIELD_BIND has a bad port: '" + b + "'");
        }
    }
    return o;
}

struct Service::Http {
    httplib::Server server;
    int port = -1;
    // Guards the listen/stop handshake: httplib ignores stop() before the
    // accept loop is running.
    std::mutex lifecycle;
    bool listening = false;
};

namespace {

int
status_for(ErrorKind k) {
    switch (k) {
    case ErrorKind::invalid_argument: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::out_of_range: return 422;
    case ErrorKind::io:
    case ErrorKind::internal: return 500;
    }
    return 500;
}

void
send_json(httplib::Response &res, int status, const nlohmann::json &body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void
send_error(httplib::Response &res, int status, const std::string &kind, const std::string &msg) {
    send_json(res, status, {{"error", {{"kind", kind}, {"message", msg}}}});
}

std::string
kind_name(ErrorKind k) {
    switch (k) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::out_of_range: return "out_of_range";
    case ErrorKind::io: return "io";
    case ErrorKind::internal: return "internal";
    }
    return "internal";
}

// Wraps a handler so engine errors become JSON error payloads.
httplib::Server::Handler
guarded(std::function<void(const httplib::Request &, httplib::Response &)> fn) {
    return [fn = std::move(fn)](const httplib::Request &req, httplib::Response &res) {
        try {
            fn(req, res);
        } catch (const Error &e) {
            send_error(res, status_for(e.kind()), kind_name(e.kind()), e.what());
        } catch (const nlohmann::json::exception &e) {
            send_error(res, 400, "invalid_argument", std::string("malformed JSON: ") + e.what());
        } catch (const std::exception &e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

nlohmann::json
body_json(const httplib::Request &req) {
    if (req.body.empty()) {
        return nlohmann::json::object();
    }
    return nlohmann::json::parse(req.body);
}

std::vector<std::uint64_t>
parse_u64_list(const std::string &s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception &) {
            fail(ErrorKind::invalid_argument, "bad integer '" + item + "' in list '" + s + "'");
        }
    }
    return out;
}

std::vector<int>
parse_int_list(const std::string &s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception &) {
            fail(ErrorKind::invalid_argument, "bad integer '" + item + "' in list '" + s + "'");
        }
    }
    return out;
}

int
int_param(const httplib::Request &req, const char *name, int fallback) {
    if (!req.has_param(name)) {
        return fallback;
    }
    const auto v = parse_int_list(req.get_param_value(name));
    if (v.size() != 1) {
        fail(ErrorKind::invalid_argument, std::string("parameter ") + name + " must be one integer");
    }
    return v[0];
}

} // namespace

Service::Service(ServiceOptions opts) : mOpts(std::move(opts)), mHttp(std::make_unique<Http>()) {
    if (mOpts.dump_path && std::filesystem::exists(*mOpts.dump_path)) {
        const auto bytes = read_file(*mOpts.dump_path);
        mSessions.restore(nlohmann::json::parse(bytes.begin(), bytes.end()));
    }
    install_routes();
}

Service::~Service() { stop(); }

int
Service::bind() {
    auto &srv = mHttp->server;
    if (mOpts.port == 0) {
        mHttp->port = srv.bind_to_any_port(mOpts.host);
    } else if (srv.bind_to_port(mOpts.host, mOpts.port)) {
        mHttp->port = mOpts.port;
    }
    if (mHttp->port < 0) {
        fail(ErrorKind::io, "cannot bind " + mOpts.host + ":" + std::to_string(mOpts.port));
    }
    return mHttp->port;
}

void
Service::listen() {
    {
        std::lock_guard lock(mHttp->lifecycle);
        if (mStopped) {
            return;
        }
        mHttp->listening = true;
    }
    mHttp->server.listen_after_bind();
}

void
Service::stop() {
    bool listening = false;
    {
        std::lock_guard lock(mHttp->lifecycle);
        if (mStopped.exchange(true)) {
            return;
        }
        listening = mHttp->listening;
    }
    if (listening) {
        mHttp->server.wait_until_ready();
        mHttp->server.stop();
    }
    if (mOpts.dump_path) {
        write_text_file(*mOpts.dump_path, mSessions.dump().dump(2));
    }
}

void
Service::install_routes() {
    auto &srv = mHttp->server;

    srv.Post("/v1/sessions", guarded([this](const httplib::Request &req, httplib::Response &res) {
                 send_json(res, 201, to_json(*mSessions.create(body_json(req))));
             }));

    srv.Get(R"(/v1/sessions/([^/]+))",
            guarded([this](const httplib::Request &req, httplib::Response &res) {
                send_json(res, 200, to_json(*mSessions.get(req.matches[1])));
            }));

    // Body: one edit object, or {"edits": [...]} applied all-or-nothing.
    srv.Put(R"(/v1/sessions/([^/]+)/edits)",
            guarded([this](const httplib::Request &req, httplib::Response &res) {
                const auto body = body_json(req);
                std::vector<Edit> edits;
                if (body.contains("edits")) {
                    for (const auto &e : body.at("edits")) {
                        edits.push_back(edit_from_json(e));
                    }
                } else {
                    edits.push_back(edit_from_json(body));
                }
                const auto s = mSessions.apply_edits(req.matches[1], edits);
                send_json(res, 200,
                          {{"id", s->id},
                           {"version", s->version},
                           {"objects", s->bev.objects().size()},
                           {"nonzero_pixels", s->bev.nonzero_pixels()}});
            }));

    // Body: a camera object, or null to return to the default camera.
    srv.Put(R"(/v1/sessions/([^/]+)/camera)",
            guarded([this](const httplib::Request &req, httplib::Response &res) {
                const auto body = body_json(req);
                std::optional<Camera> cam;
                if (!body.is_null()) {
                    cam = camera_from_json(body);
                }
                send_json(res, 200, to_json(*mSessions.set_camera(req.matches[1], cam)));
            }));

    srv.Get(R"(/v1/sessions/([^/]+)/render)",
            guarded([this](const httplib::Request &req, httplib::Response &res) {
                const auto snap = mSessions.get(req.matches[1]);
                RenderRequest rr;
                if (req.has_param("w")) {
                    rr.width = int_param(req, "w", 0);
                }
                if (req.has_param("h")) {
                    rr.height = int_param(req, "h", 0);
                }
                rr.ssaa      = int_param(req, "ssaa", rr.ssaa);
                rr.n_samples = int_param(req, "n_samples", rr.n_samples);
                if (req.has_param("seed")) {
                    const auto v = parse_u64_list(req.get_param_value("seed"));
                    if (v.size() != 1) {
                        fail(ErrorKind::invalid_argument, "seed must be one integer");
                    }
                    rr.latent_seed = v[0];
                }
                if (req.has_param("camera")) {
                    rr.camera = camera_from_json(nlohmann::json::parse(req.get_param_value("camera")));
                }
                const auto out = render_session(*snap, rr);
                res.set_header("X-Bevfield-Meta", out.meta.dump());
                const auto png = encode_png(out.image);
                res.set_content(std::string(png.begin(), png.end()), "image/png");
            }));

    srv.Post(R"(/v1/sessions/([^/]+)/stitch)",
             guarded([this](const httplib::Request &req, httplib::Response &res) {
                 const auto snap = mSessions.get(req.matches[1]);
                 auto sr         = stitch_request_from_json(body_json(req), *snap);
                 // Validate the window against the snapshot before queueing.
                 slide(snap->bev, sr.config);
                 const std::string id = mJobs.submit(snap, std::move(sr));
                 send_json(res, 202, to_json(mJobs.get(id)));
             }));

    srv.Get(R"(/v1/jobs/([^/]+))", guarded([this](const httplib::Request &req, httplib::Response &res) {
                send_json(res, 200, to_json(mJobs.get(req.matches[1])));
            }));

    srv.Get(R"(/v1/jobs/([^/]+)/panorama)",
            guarded([this](const httplib::Request &req, httplib::Response &res) {
                const auto job = mJobs.get(req.matches[1]);
                if (job.status != JobQueue::Status::done) {
                    send_error(res, 409, "not_ready", "job is " + to_string(job.status));
                    return;
                }
                res.set_header("X-Bevfield-Meta", to_json(job).dump());
                res.set_content(std::string(job.panorama_png.begin(), job.panorama_png.end()),
                                "image/png");
            }));

    srv.Get(R"(/v1/sessions/([^/]+)/eqt)",
            guarded([this](const httplib::Request &req, httplib::Response &res) {
                const auto snap = mSessions.get(req.matches[1]);
                EqtConfig cfg;
                if (req.has_param("shifts")) {
                    cfg.shifts = parse_int_list(req.get_param_value("shifts"));
                }
                if (req.has_param("latents")) {
                    cfg.latent_seeds = parse_u64_list(req.get_param_value("latents"));
                }
                if (req.has_param("crop")) {
                    cfg.crop_border = int_param(req, "crop", 0);
                }
                const int n = int_param(req, "n_samples", 16);
                if (n < 1 || n > 1024) {
                    fail(ErrorKind::invalid_argument, "n_samples must lie in [1, 1024]");
                }
                auto j      = to_json(eqt_session(*snap, cfg, n));
                j["config"] = to_json(cfg);
                j["session"] = snap->id;
                j["version"] = snap->version;
                send_json(res, 200, j);
            }));

    srv.set_error_handler([](const httplib::Request &, httplib::Response &res) {
        if (res.body.empty()) {
            send_error(res, res.status, "http", "no such route");
        }
    });
}

} // namespace bevfield
