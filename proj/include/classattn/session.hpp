/**
 * session.hpp — one live class: roster, ingestion, windowing, scoring and
 * fan-out of aggregate events to instructor subscribers.
 *
 * Ingestion (any thread, serialized internally) admits samples, stamps them
 * with the session clock and appends them to the window accumulator.
 * tick() closes due windows. Closed windows are processed inline (sync mode)
 * or on a dedicated worker (async mode); processing is clustering, scoring,
 * heatmap binning, alert evaluation, history, record, fan-out.
 *
 * Backpressure (async mode): when more than two closed windows wait for the
 * worker, the older ones are discarded and counted in skipped_windows.
 */

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "classattn/config.hpp"
#include "classattn/record.hpp"
#include "classattn/scoring.hpp"
#include "classattn/window.hpp"
#include "classattn/wire.hpp"

namespace classattn {

// Milliseconds since session start.
using SessionClock = std::function<double()>;

// Wall-clock milliseconds since the call, multiplied by scale (an
// accelerated clock for simulations when scale > 1).
SessionClock steady_session_clock(double scale = 1.0);

// A clock advanced by hand; copies share the same time.
class ManualClock {
public:
    double now() const noexcept { return t_->load(); }
    void set(double t_ms) noexcept { t_->store(t_ms); }
    SessionClock clock() const {
        return [t = t_] { return t->load(); };
    }

private:
    std::shared_ptr<std::atomic<double>> t_ = std::make_shared<std::atomic<double>>(0.0);
};

struct IngestResult {
    std::size_t accepted = 0;
    std::size_t dropped = 0;
};

struct SessionMetrics {
    std::uint64_t windows_published = 0;
    std::uint64_t skipped_windows = 0;
    std::uint64_t alerts = 0;
    std::uint64_t accepted = 0;
    std::uint64_t dropped = 0;
    std::uint64_t dropped_late = 0;
    std::uint64_t batches = 0;
    std::uint64_t scoring_errors = 0;
    // Window processing latency: from window close to event emission.
    double latency_p50_ms = 0.0;
    double latency_p99_ms = 0.0;
    double latency_max_ms = 0.0;
};

nlohmann::json to_json(const SessionMetrics& m);

enum class SessionState { Open, Closed };

class Session {
public:
    using Subscriber = std::function<void(const std::string& message)>;

    struct Options {
        bool async = false;
        SessionClock clock;  // defaults to a steady clock started at construction
        std::shared_ptr<RecordWriter> record;
        std::uint64_t seed = 0;  // written to the record header
        std::string created_at;  // defaults to the current UTC time
    };

    // Throws ConfigError when config is invalid.
    Session(std::string id, SessionConfig config, Options options);
    ~Session();

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const noexcept { return id_; }
    const SessionConfig& config() const noexcept { return config_; }
    const std::string& created_at() const noexcept { return created_at_; }
    SessionState state() const;
    double now() const { return clock_(); }

    // Issues a fresh opaque token. Throws Error(SessionClosed).
    std::string join();
    std::size_t roster_size() const;
    bool has_token(const std::string& token) const;

    // Throws Error(Auth) for an unknown token, Error(SessionClosed) after close.
    IngestResult ingest(const std::string& token, std::span<const RawSample> samples);

    // Closes windows due at the session clock (server timestamps) or at the
    // newest client timestamp minus a grace period (client timestamps).
    // Sync mode returns the published events.
    std::vector<WindowEvent> tick();

    // Publishes windows ending at or before end_ms (default: the clock),
    // writes the close record line and notifies subscribers. Idempotent.
    void close(std::optional<double> end_ms = std::nullopt, const std::string& reason = "closed");

    // Blocks until the async worker has processed every queued window.
    void drain();

    // Returns a subscription id. The callback runs on the processing thread
    // and must not call back into the session.
    std::uint64_t subscribe(Subscriber fn);
    void unsubscribe(std::uint64_t id);

    // Applies to windows processed after the call. Throws ConfigError.
    void set_threshold(double threshold);
    double threshold() const;

    std::vector<WindowEvent> history() const;
    SessionMetrics metrics() const;
    // Aggregate-only view for the instructor: config, counts, recent scores
    // and the latest heatmap.
    nlohmann::json summary(std::size_t max_history = 300) const;

    // Client-timestamp mode: how far behind the newest sample windows close.
    static constexpr double kClientGraceMs = 1000.0;

private:
    struct PendingWindow {
        GazeDistribution dist;
        std::chrono::steady_clock::time_point closed_at;
    };

    void enqueue(std::vector<GazeDistribution> closed, bool allow_skip, std::vector<WindowEvent>* sync_out);
    void stop_worker();
    WindowEvent process(const PendingWindow& w);
    AttentionScore score(const GazeDistribution& d);
    void broadcast(const std::string& message);
    void worker_loop();
    void write_record(const nlohmann::json& line);

    const std::string id_;
    const SessionConfig config_;
    const bool async_;
    SessionClock clock_;
    std::shared_ptr<RecordWriter> record_;
    std::string created_at_;

    // Ingestion state.
    mutable std::mutex ingest_mu_;
    std::unordered_map<std::string, std::uint32_t> roster_;
    WindowAccumulator acc_;
    SessionState state_ = SessionState::Open;
    double client_high_water_ = -1.0;
    std::uint64_t accepted_ = 0;
    std::uint64_t dropped_ = 0;
    std::uint64_t batches_ = 0;

    // Processing state; touched only by the processing thread and readers.
    mutable std::mutex process_mu_;
    AlertEvaluator alerts_;
    std::optional<NullDistribution> null_;
    std::vector<WindowEvent> history_;
    std::vector<double> latencies_ms_;
    std::uint64_t alert_count_ = 0;
    std::uint64_t scoring_errors_ = 0;
    std::uint64_t skipped_ = 0;

    // Serializes processing in sync mode.
    std::mutex sync_mu_;

    mutable std::mutex sub_mu_;
    std::map<std::uint64_t, Subscriber> subscribers_;
    std::uint64_t next_sub_ = 1;

    // Async worker queue.
    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::condition_variable idle_cv_;
    std::deque<PendingWindow> queue_;
    bool busy_ = false;
    bool stopping_ = false;
    bool worker_running_ = false;
    std::thread worker_;
};

struct CreatedSession {
    std::string session_id;
    std::string instructor_key;
    std::shared_ptr<Session> session;
};

class SessionManager {
public:
    struct Options {
        bool async = true;
        std::optional<std::filesystem::path> record_dir;
        SessionConfig defaults;
        // Session clocks run this many times faster than the wall clock.
        double time_scale = 1.0;
    };

    explicit SessionManager(Options options);
    ~SessionManager();

    // Validates config; throws ConfigError.
    CreatedSession create(const SessionConfig& config);
    CreatedSession create() { return create(options_.defaults); }

    // Throws Error(NotFound).
    std::shared_ptr<Session> find(const std::string& id) const;
    // Throws Error(NotFound) or Error(Auth).
    std::shared_ptr<Session> authorize(const std::string& id, const std::string& instructor_key) const;

    std::vector<std::shared_ptr<Session>> sessions() const;
    void tick_all();
    void close_all(const std::string& reason);

    const SessionConfig& defaults() const noexcept { return options_.defaults; }

private:
    Options options_;
    mutable std::mutex mu_;
    std::map<std::string, std::pair<std::string, std::shared_ptr<Session>>> sessions_;
};

// 128 random bits as 32 lowercase hex characters.
std::string random_hex_id();

}  // namespace classattn
