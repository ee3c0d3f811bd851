#include "classattn/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "classattn/error.hpp"
#include "classattn/heatmap.hpp"

namespace classattn {

using nlohmann::json;
using steady = std::chrono::steady_clock;

SessionClock steady_session_clock(double scale) {
    const auto start = steady::now();
    return [start, scale] { return scale * std::chrono::duration<double, std::milli>(steady::now() - start).count(); };
}

std::string random_hex_id() {
    static thread_local std::random_device rd;
    std::string out;
    out.reserve(32);
    for (int i = 0; i < 4; ++i) {
        char buf[9];
        std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(rd()));
        out += buf;
    }
    return out;
}

json to_json(const SessionMetrics& m) {
    return json{{"windows_published", m.windows_published},
                {"skipped_windows", m.skipped_windows},
                {"alerts", m.alerts},
                {"accepted", m.accepted},
                {"dropped", m.dropped},
                {"dropped_late", m.dropped_late},
                {"batches", m.batches},
                {"scoring_errors", m.scoring_errors},
                {"latency_p50_ms", m.latency_p50_ms},
                {"latency_p99_ms", m.latency_p99_ms},
                {"latency_max_ms", m.latency_max_ms}};
}

Session::Session(std::string id, SessionConfig config, Options options)
    : id_(std::move(id)),
      config_((config.validate(), std::move(config))),
      async_(options.async),
      clock_(options.clock ? std::move(options.clock) : steady_session_clock()),
      record_(std::move(options.record)),
      created_at_(options.created_at.empty() ? utc_timestamp() : std::move(options.created_at)),
      acc_(config_.window),
      alerts_(config_.alert) {
    write_record(header_json(id_, created_at_, options.seed, config_));
    if (async_) {
        worker_running_ = true;
        worker_ = std::thread([this] { worker_loop(); });
    }
}

Session::~Session() {
    close(std::nullopt, "shutdown");
    stop_worker();
}

SessionState Session::state() const {
    std::lock_guard lock(ingest_mu_);
    return state_;
}

std::string Session::join() {
    std::lock_guard lock(ingest_mu_);
    if (state_ == SessionState::Closed) {
        throw Error(ErrorCode::SessionClosed, "session " + id_ + " is closed");
    }
    std::string token;
    do {
        token = random_hex_id();
    } while (roster_.contains(token));
    roster_.emplace(token, static_cast<std::uint32_t>(roster_.size()));
    return token;
}

std::size_t Session::roster_size() const {
    std::lock_guard lock(ingest_mu_);
    return roster_.size();
}

bool Session::has_token(const std::string& token) const {
    std::lock_guard lock(ingest_mu_);
    return roster_.contains(token);
}

IngestResult Session::ingest(const std::string& token, std::span<const RawSample> samples) {
    std::lock_guard lock(ingest_mu_);
    if (state_ == SessionState::Closed) {
        throw Error(ErrorCode::SessionClosed, "session " + id_ + " is closed");
    }
    const auto it = roster_.find(token);
    if (it == roster_.end()) {
        throw Error(ErrorCode::Auth, "unknown student token");
    }
    const StudentId student{it->second};
    const bool client_time = config_.timestamp_source == TimestampSource::Client;
    const double now = clock_();

    IngestResult r;
    for (const auto& s : samples) {
        const double t = client_time ? s.t_ms : now;
        const AdmittedCoord a = admit(s.x, s.y);
        if (!std::isfinite(t) || t < 0.0 || !a.admitted() || !acc_.add({student, t, a.x, a.y})) {
            ++r.dropped;
            continue;
        }
        ++r.accepted;
        if (client_time) {
            client_high_water_ = std::max(client_high_water_, t);
        }
    }
    accepted_ += r.accepted;
    dropped_ += r.dropped;
    ++batches_;
    write_record(batch_json(now, r.accepted, r.dropped, std::vector<RawSample>(samples.begin(), samples.end())));
    return r;
}

std::vector<WindowEvent> Session::tick() {
    std::vector<WindowEvent> out;
    std::unique_lock sync_lock(sync_mu_, std::defer_lock);
    if (!async_) sync_lock.lock();
    std::vector<GazeDistribution> closed;
    {
        std::lock_guard lock(ingest_mu_);
        if (state_ == SessionState::Closed) return out;
        const double now =
            config_.timestamp_source == TimestampSource::Client ? client_high_water_ - kClientGraceMs : clock_();
        closed = acc_.advance_to(now);
    }
    enqueue(std::move(closed), true, async_ ? nullptr : &out);
    return out;
}

void Session::close(std::optional<double> end_ms, const std::string& reason) {
    std::unique_lock sync_lock(sync_mu_, std::defer_lock);
    if (!async_) sync_lock.lock();
    std::vector<GazeDistribution> closed;
    CloseInfo info;
    {
        std::lock_guard lock(ingest_mu_);
        if (state_ == SessionState::Closed) return;
        state_ = SessionState::Closed;
        const double default_end =
            config_.timestamp_source == TimestampSource::Client ? std::max(client_high_water_, 0.0) : clock_();
        const double end = end_ms.value_or(default_end);
        closed = acc_.advance_to(end);
        info.end_ms = static_cast<std::int64_t>(std::floor(end));
        info.accepted = accepted_;
        info.dropped = dropped_;
        info.dropped_late = acc_.dropped_late();
    }
    enqueue(std::move(closed), false, nullptr);
    drain();
    stop_worker();
    {
        std::lock_guard lock(process_mu_);
        info.windows = history_.size();
        info.skipped_windows = skipped_;
    }
    info.reason = reason;
    write_record(to_json(info));
    broadcast(closed_json(id_, info.end_ms).dump());
}

void Session::enqueue(std::vector<GazeDistribution> closed, bool allow_skip, std::vector<WindowEvent>* sync_out) {
    if (closed.empty()) return;
    const auto closed_at = steady::now();
    if (!async_) {
        for (auto& d : closed) {
            WindowEvent e = process(PendingWindow{std::move(d), closed_at});
            if (sync_out != nullptr) sync_out->push_back(std::move(e));
        }
        return;
    }
    std::uint64_t skipped = 0;
    {
        std::lock_guard lock(queue_mu_);
        for (auto& d : closed) {
            queue_.push_back(PendingWindow{std::move(d), closed_at});
        }
        while (allow_skip && queue_.size() > 2) {
            queue_.pop_front();
            ++skipped;
        }
    }
    if (skipped > 0) {
        std::lock_guard lock(process_mu_);
        skipped_ += skipped;
    }
    queue_cv_.notify_one();
}

void Session::worker_loop() {
    std::unique_lock lock(queue_mu_);
    for (;;) {
        queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) {
            if (stopping_) {
                worker_running_ = false;
                idle_cv_.notify_all();
                return;
            }
            continue;
        }
        PendingWindow w = std::move(queue_.front());
        queue_.pop_front();
        busy_ = true;
        lock.unlock();
        process(w);
        lock.lock();
        busy_ = false;
        if (queue_.empty()) idle_cv_.notify_all();
    }
}

void Session::drain() {
    if (!async_) return;
    std::unique_lock lock(queue_mu_);
    idle_cv_.wait(lock, [this] { return (queue_.empty() && !busy_) || !worker_running_; });
}

void Session::stop_worker() {
    {
        std::lock_guard lock(queue_mu_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    if (worker_.joinable() && worker_.get_id() != std::this_thread::get_id()) {
        worker_.join();
    }
}

AttentionScore Session::score(const GazeDistribution& d) {
    if (config_.strategy == ScoreStrategy::Density || d.empty()) {
        return score_distribution(d, config_.clustering);
    }
    try {
        if (!null_) {
            null_ = summarize_null(null_distribution(config_.randomization));
        }
        return score_window_statistical(d, config_.randomization, *null_, config_.z_saturation);
    } catch (const Error&) {
        AttentionScore s;
        s.strategy = ScoreStrategy::Statistical;
        s.window_start = d.window_start;
        s.window_end = d.window_end;
        s.n_points = d.size();
        s.error = true;
        return s;
    }
}

WindowEvent Session::process(const PendingWindow& w) {
    WindowEvent e;
    e.session = id_;
    e.index = static_cast<std::uint64_t>(w.dist.window_start / config_.window.stride_ms);
    e.score = score(w.dist);
    e.heatmap = HeatmapGrid::bin(w.dist, config_.heatmap_rows, config_.heatmap_cols);
    std::string text;
    {
        // The record line is written under the lock so that it is ordered
        // consistently with threshold changes.
        std::lock_guard lock(process_mu_);
        e.alert = alerts_.observe(e.score).has_value();
        e.threshold = alerts_.policy().threshold;
        if (e.alert) ++alert_count_;
        if (e.score.error) ++scoring_errors_;
        history_.push_back(e);
        const json j = to_json(e);
        write_record(j);
        text = j.dump();
    }
    broadcast(text);
    const double latency = std::chrono::duration<double, std::milli>(steady::now() - w.closed_at).count();
    {
        std::lock_guard lock(process_mu_);
        latencies_ms_.push_back(latency);
    }
    return e;
}

void Session::broadcast(const std::string& message) {
    std::vector<Subscriber> subs;
    {
        std::lock_guard lock(sub_mu_);
        subs.reserve(subscribers_.size());
        for (const auto& [id, fn] : subscribers_) subs.push_back(fn);
    }
    for (const auto& fn : subs) fn(message);
}

void Session::write_record(const json& line) {
    if (record_) record_->write(line);
}

std::uint64_t Session::subscribe(Subscriber fn) {
    std::lock_guard lock(sub_mu_);
    const auto id = next_sub_++;
    subscribers_.emplace(id, std::move(fn));
    return id;
}

void Session::unsubscribe(std::uint64_t id) {
    std::lock_guard lock(sub_mu_);
    subscribers_.erase(id);
}

void Session::set_threshold(double threshold) {
    std::lock_guard lock(process_mu_);
    AlertPolicy p = alerts_.policy();
    p.threshold = threshold;
    alerts_.set_policy(p);
    write_record(json{{"type", "threshold"}, {"threshold", threshold}});
}

double Session::threshold() const {
    std::lock_guard lock(process_mu_);
    return alerts_.policy().threshold;
}

std::vector<WindowEvent> Session::history() const {
    std::lock_guard lock(process_mu_);
    return history_;
}

SessionMetrics Session::metrics() const {
    SessionMetrics m;
    {
        std::lock_guard lock(ingest_mu_);
        m.accepted = accepted_;
        m.dropped = dropped_;
        m.dropped_late = acc_.dropped_late();
        m.batches = batches_;
    }
    std::vector<double> lat;
    {
        std::lock_guard lock(process_mu_);
        m.windows_published = history_.size();
        m.skipped_windows = skipped_;
        m.alerts = alert_count_;
        m.scoring_errors = scoring_errors_;
        lat = latencies_ms_;
    }
    if (!lat.empty()) {
        std::sort(lat.begin(), lat.end());
        // Nearest-rank percentiles.
        const auto rank = [&lat](double q) {
            const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(lat.size())));
            return lat[std::clamp<std::size_t>(k, 1, lat.size()) - 1];
        };
        m.latency_p50_ms = rank(0.50);
        m.latency_p99_ms = rank(0.99);
        m.latency_max_ms = lat.back();
    }
    return m;
}

json Session::summary(std::size_t max_history) const {
    json cfg = to_json(config_);
    json hist = json::array();
    json latest = nullptr;
    {
        std::lock_guard lock(process_mu_);
        cfg["threshold"] = alerts_.policy().threshold;
        const std::size_t from = history_.size() > max_history ? history_.size() - max_history : 0;
        for (std::size_t i = from; i < history_.size(); ++i) {
            const auto& e = history_[i];
            hist.push_back({{"index", e.index},
                            {"start_ms", e.score.window_start},
                            {"end_ms", e.score.window_end},
                            {"score", e.score.value},
                            {"n_points", e.score.n_points},
                            {"n_clusters", e.score.n_clusters},
                            {"alert", e.alert}});
        }
        if (!history_.empty()) latest = to_json(history_.back());
    }
    return json{{"session", id_},
                {"created_at", created_at_},
                {"state", state() == SessionState::Open ? "open" : "closed"},
                {"roster_size", roster_size()},
                {"threshold", cfg["threshold"]},
                {"config", std::move(cfg)},
                {"metrics", to_json(metrics())},
                {"history", std::move(hist)},
                {"latest", std::move(latest)}};
}

SessionManager::SessionManager(Options options) : options_(std::move(options)) {
    options_.defaults.validate();
    if (!(options_.time_scale > 0.0)) throw ConfigError("time_scale", "must be positive");
}

SessionManager::~SessionManager() { close_all("shutdown"); }

CreatedSession SessionManager::create(const SessionConfig& config) {
    config.validate();
    CreatedSession c;
    std::lock_guard lock(mu_);
    do {
        c.session_id = random_hex_id().substr(0, 16);
    } while (sessions_.contains(c.session_id));
    c.instructor_key = random_hex_id();
    Session::Options opts;
    opts.async = options_.async;
    opts.seed = config.randomization.seed;
    opts.clock = steady_session_clock(options_.time_scale);
    if (options_.record_dir) {
        opts.record = std::make_shared<RecordWriter>(*options_.record_dir / (c.session_id + ".ndjson"));
    }
    c.session = std::make_shared<Session>(c.session_id, config, std::move(opts));
    sessions_.emplace(c.session_id, std::make_pair(c.instructor_key, c.session));
    return c;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw Error(ErrorCode::NotFound, "unknown session " + id);
    }
    return it->second.second;
}

std::shared_ptr<Session> SessionManager::authorize(const std::string& id, const std::string& instructor_key) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw Error(ErrorCode::NotFound, "unknown session " + id);
    }
    if (instructor_key.empty() || instructor_key != it->second.first) {
        throw Error(ErrorCode::Auth, "invalid instructor key");
    }
    return it->second.second;
}

std::vector<std::shared_ptr<Session>> SessionManager::sessions() const {
    std::lock_guard lock(mu_);
    std::vector<std::shared_ptr<Session>> out;
    for (const auto& [id, entry] : sessions_) out.push_back(entry.second);
    return out;
}

void SessionManager::tick_all() {
    for (const auto& s : sessions()) s->tick();
}

void SessionManager::close_all(const std::string& reason) {
    for (const auto& s : sessions()) s->close(std::nullopt, reason);
}

}  // namespace classattn
