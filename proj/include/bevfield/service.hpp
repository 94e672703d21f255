// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/bevmap.hpp"
#include "bevfield/generator.hpp"
#include "bevfield/metrics.hpp"
#include "bevfield/renderer.hpp"
#include "bevfield/stitcher.hpp"

#include <json.hpp>

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace bevfield {

enum class FieldMode { procedural, neural };

std::string to_string(FieldMode m);
FieldMode field_mode_from_string(const std::string &s);

/// Immutable session state. Every accepted edit produces a new Session with
/// version + 1; readers keep whatever snapshot they took.
struct Session {
    std::string id;
    std::uint64_t version = 0;
    BevMap bev;
    FieldMode mode            = FieldMode::procedural;
    std::uint64_t latent_seed = 0;
    std::uint64_t init_seed   = 0; // neural weights
    bool checker_ground       = false; // procedural ground albedo, see kCheckerPeriod
    GeneratorConfig gen_config;
    std::optional<Camera> camera; // unset: top-down camera over the whole map
    std::shared_ptr<const GeneratorParams> params; // neural mode only
    std::string created_at;
    std::string last_modified;
};

/// Summary used by GET /sessions/{id} and the edit response.
nlohmann::json to_json(const Session &s);

/// Camera used when a request does not override it.
Camera session_camera(const Session &s);

/// Create request: {schema, h, w, margin_px?, seed?, n_min?, n_max?, mode?,
/// latent_seed?, init_seed?, ground?}. Without a seed the map is empty.
/// ground is "plain" (default) or "checker", a sub-pixel checkerboard used to
/// exercise anti-aliasing.
Session make_session(const std::string &id, const nlohmann::json &request);

class SessionStore {
  public:
    std::shared_ptr<const Session> create(const nlohmann::json &request);
    /// Throws Error(not_found) for unknown ids.
    std::shared_ptr<const Session> get(const std::string &id) const;
    /// Applies the edits in order; either all are accepted (version += n) or
    /// none is and the session is unchanged. Edits to one session are serialized.
    std::shared_ptr<const Session> apply_edits(const std::string &id, const std::vector<Edit> &edits);
    std::shared_ptr<const Session> set_camera(const std::string &id, const std::optional<Camera> &cam);

    nlohmann::json dump() const;
    void restore(const nlohmann::json &dump);
    std::size_t size() const;

  private:
    struct Entry {
        std::mutex mutex;
        std::shared_ptr<const Session> current;
    };
    std::shared_ptr<Entry> entry(const std::string &id) const;

    mutable std::mutex mMutex;
    std::map<std::string, std::shared_ptr<Entry>> mEntries;
    std::uint64_t mNextId = 1;
};

struct RenderRequest {
    std::optional<int> width, height;
    int ssaa      = 1;
    int n_samples = 32;
    std::optional<std::uint64_t> latent_seed;
    std::optional<Camera> camera;
};

struct RenderResult {
    Image image;
    nlohmann::json meta;
};

/// Deterministic given (snapshot, request). meta echoes the settings and
/// carries the render time and high-frequency energy.
RenderResult render_session(const Session &s, const RenderRequest &req);

struct StitchRequest {
    StitchConfig config;
    std::string rig = "side"; // "side" or "top_down"
    int n_samples   = 32;
    int ssaa        = 1;
    std::optional<std::uint64_t> latent_seed;
};

/// Reads StitchConfig fields plus rig, n_samples, ssaa and latent_seed. The
/// window defaults to the map height and min(map width, map height).
StitchRequest stitch_request_from_json(const nlohmann::json &j, const Session &s);

struct StitchResult {
    Image panorama;
    StitchReport report;
};

StitchResult stitch_session(const Session &s, const StitchRequest &req, const Progress &progress = {});

EqtReport eqt_session(const Session &s, const EqtConfig &cfg, int n_samples = 16);

/// Background stitch jobs, run one at a time in submission order.
class JobQueue {
  public:
    enum class Status { queued, running, done, failed };

    struct Job {
        std::string id;
        std::string session_id;
        std::uint64_t version = 0;
        Status status         = Status::queued;
        int done = 0, total = 0;
        std::optional<StitchReport> report;
        std::vector<std::uint8_t> panorama_png;
        std::string error;
    };

    JobQueue();
    ~JobQueue();
    JobQueue(const JobQueue &)            = delete;
    JobQueue &operator=(const JobQueue &) = delete;

    std::string submit(std::shared_ptr<const Session> snapshot, StitchRequest req);
    /// Copy of the job; throws Error(not_found).
    Job get(const std::string &id) const;
    /// Blocks until the job leaves the queued/running states.
    Job wait(const std::string &id) const;

  private:
    struct Task {
        std::string id;
        std::shared_ptr<const Session> snapshot;
        StitchRequest req;
    };
    void worker();

    mutable std::mutex mMutex;
    mutable std::condition_variable mChanged;
    std::map<std::string, Job> mJobs;
    std::deque<Task> mQueue;
    std::uint64_t mNextId = 1;
    bool mStopping        = false;
    std::thread mThread;
};

std::string to_string(JobQueue::Status s);
nlohmann::json to_json(const JobQueue::Job &j);

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port         = 8080;
    std::optional<std::string> dump_path; // written on stop(), restored on start
};

/// "host:port" from BEVFIELD_BIND when set, otherwise the defaults.
ServiceOptions service_options_from_env();

/// HTTP facade; every route lives under /v1.
class Service {
  public:
    explicit Service(ServiceOptions opts = {});
    ~Service();

    /// Binds (port 0 picks a free port) and returns the bound port.
    int bind();
    /// Serves until stop(); call bind() first.
    void listen();
    /// Stops the listener and writes the dump when configured. Idempotent.
    void stop();

    SessionStore &sessions() { return mSessions; }

  private:
    struct Http;
    void install_routes();

    ServiceOptions mOpts;
    SessionStore mSessions;
    JobQueue mJobs;
    std::unique_ptr<Http> mHttp;
    std::atomic<bool> mStopped{false};
};

} // namespace bevfield
