#include "classattn/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>
#include <tuple>

#include "classattn/error.hpp"
#include "classattn/rng.hpp"

namespace classattn {

using nlohmann::json;

FocusPoint focus_point(int region) {
    if (region < 1 || region > 9) {
        throw ConfigError("focus", "region must be in 1..9, got " + std::to_string(region));
    }
    constexpr double centers[3] = {1.0 / 6.0, 0.5, 5.0 / 6.0};
    return {centers[(region - 1) % 3], centers[(region - 1) / 3]};
}

const char* behavior_name(Behavior b) noexcept {
    switch (b) {
        case Behavior::Attentive: return "attentive";
        case Behavior::Distracted: return "distracted";
        case Behavior::Intermittent: return "intermittent";
    }
    return "attentive";
}

namespace {

Behavior parse_behavior(const std::string& s, const std::string& field) {
    if (s == "attentive") return Behavior::Attentive;
    if (s == "distracted") return Behavior::Distracted;
    if (s == "intermittent") return Behavior::Intermittent;
    throw ConfigError(field, "expected attentive, distracted or intermittent");
}

template <typename T>
T field_as(const json& j, const char* key, T fallback, const std::string& field) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(field + "." + key, "wrong type");
    }
}

Focus parse_focus(const json& j, const std::string& field) {
    if (j.is_null()) return NoFocus{};
    if (j.is_number_integer()) {
        const int r = j.get<int>();
        focus_point(r);
        return SingleFocus{r};
    }
    if (j.is_object() && j.contains("split")) {
        const json& s = j.at("split");
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer()) {
            throw ConfigError(field + ".split", "expected two region ids");
        }
        SplitFocus f{s[0].get<int>(), s[1].get<int>(), field_as<double>(j, "ratio", 0.5, field)};
        return f;
    }
    throw ConfigError(field, "expected a region id, null, or {\"split\": [a, b], \"ratio\": r}");
}

json focus_json(const Focus& f) {
    if (std::holds_alternative<NoFocus>(f)) return nullptr;
    if (const auto* s = std::get_if<SingleFocus>(&f)) return s->region;
    const auto& sp = std::get<SplitFocus>(f);
    return json{{"split", {sp.first, sp.second}}, {"ratio", sp.ratio}};
}

}  // namespace

std::int64_t ScenarioScript::total_ms() const {
    std::int64_t t = 0;
    for (const auto& e : timeline) t += e.duration_ms;
    return t;
}

void ScenarioScript::validate() const {
    if (roster.empty()) throw ConfigError("class", "at least one student is required");
    if (timeline.empty()) throw ConfigError("timeline", "at least one episode is required");
    if (batch.max_points < 1) throw ConfigError("batch.max_points", "must be positive");
    if (batch.interval_ms < 1) throw ConfigError("batch.interval_ms", "must be positive");
    for (const auto& p : roster) {
        if (!(p.mse_target > 0.0)) throw ConfigError("class.mse_target", "must be positive");
        if (!(p.sample_rate_hz > 0.0) || p.sample_rate_hz > 1000.0) {
            throw ConfigError("class.sample_rate_hz", "must be in (0, 1000]");
        }
        if (p.switch_per_s < 0.0 || p.return_per_s < 0.0) {
            throw ConfigError("class.switch_per_s", "rates must be non-negative");
        }
    }
    for (const auto& e : timeline) {
        if (e.duration_ms <= 0) throw ConfigError("timeline.duration_ms", "must be positive");
        if (const auto* s = std::get_if<SingleFocus>(&e.focus)) focus_point(s->region);
        if (const auto* s = std::get_if<SplitFocus>(&e.focus)) {
            focus_point(s->first);
            focus_point(s->second);
            if (!(s->ratio > 0.0 && s->ratio < 1.0)) throw ConfigError("timeline.focus.ratio", "must be in (0, 1)");
        }
    }
    session_config().validate();
}

SessionConfig ScenarioScript::session_config(const SessionConfig& base) const {
    return session_config_from_json(session_overrides, base, "session");
}

ScenarioScript scenario_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario", "expected a JSON object");
    ScenarioScript s;
    s.name = field_as<std::string>(j, "name", s.name, "scenario");
    s.seed = field_as<std::uint64_t>(j, "seed", s.seed, "scenario");
    if (const auto it = j.find("batch"); it != j.end()) {
        s.batch.max_points = field_as<int>(*it, "max_points", s.batch.max_points, "batch");
        s.batch.interval_ms = field_as<std::int64_t>(*it, "interval_ms", s.batch.interval_ms, "batch");
    }
    const auto cls = j.find("class");
    if (cls == j.end() || !cls->is_array()) throw ConfigError("class", "expected an array of student groups");
    for (const auto& g : *cls) {
        StudentProfile p;
        const int count = field_as<int>(g, "count", 1, "class");
        if (count < 1 || count > 10000) throw ConfigError("class.count", "must be in [1, 10000]");
        p.behavior = parse_behavior(field_as<std::string>(g, "behavior", "attentive", "class"), "class.behavior");
        p.mse_target = field_as<double>(g, "mse_target", p.mse_target, "class");
        p.sample_rate_hz = field_as<double>(g, "sample_rate_hz", p.sample_rate_hz, "class");
        p.switch_per_s = field_as<double>(g, "switch_per_s", p.switch_per_s, "class");
        p.return_per_s = field_as<double>(g, "return_per_s", p.return_per_s, "class");
        p.label = field_as<std::string>(g, "label", p.label, "class");
        s.roster.insert(s.roster.end(), static_cast<std::size_t>(count), p);
    }
    const auto tl = j.find("timeline");
    if (tl == j.end() || !tl->is_array()) throw ConfigError("timeline", "expected an array of episodes");
    for (const auto& e : *tl) {
        Episode ep;
        ep.duration_ms = field_as<std::int64_t>(e, "duration_ms", 0, "timeline");
        ep.focus = parse_focus(e.contains("focus") ? e.at("focus") : json(nullptr), "timeline.focus");
        s.timeline.push_back(ep);
    }
    if (const auto it = j.find("session"); it != j.end()) s.session_overrides = *it;
    s.validate();
    return s;
}

json to_json(const ScenarioScript& s) {
    json cls = json::array();
    // Consecutive identical profiles collapse into one group.
    for (std::size_t i = 0; i < s.roster.size();) {
        const auto& p = s.roster[i];
        std::size_t n = 1;
        while (i + n < s.roster.size()) {
            const auto& q = s.roster[i + n];
            if (std::tie(q.behavior, q.mse_target, q.sample_rate_hz, q.switch_per_s, q.return_per_s, q.label) !=
                std::tie(p.behavior, p.mse_target, p.sample_rate_hz, p.switch_per_s, p.return_per_s, p.label)) {
                break;
            }
            ++n;
        }
        cls.push_back({{"count", n},
                       {"behavior", behavior_name(p.behavior)},
                       {"mse_target", p.mse_target},
                       {"sample_rate_hz", p.sample_rate_hz},
                       {"switch_per_s", p.switch_per_s},
                       {"return_per_s", p.return_per_s},
                       {"label", p.label}});
        i += n;
    }
    json tl = json::array();
    for (const auto& e : s.timeline) tl.push_back({{"duration_ms", e.duration_ms}, {"focus", focus_json(e.focus)}});
    return json{{"name", s.name},
                {"seed", s.seed},
                {"batch", {{"max_points", s.batch.max_points}, {"interval_ms", s.batch.interval_ms}}},
                {"class", std::move(cls)},
                {"timeline", std::move(tl)},
                {"session", s.session_overrides}};
}

ScenarioScript load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario", "cannot open " + path.string());
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("scenario", "malformed JSON in " + path.string());
    return scenario_from_json(j);
}

ScenarioScript make_scenario(std::uint64_t seed, int students, StudentProfile profile, std::vector<Episode> timeline) {
    ScenarioScript s;
    s.seed = seed;
    s.roster.assign(static_cast<std::size_t>(students), profile);
    s.timeline = std::move(timeline);
    return s;
}

std::size_t GeneratedStream::sample_count() const {
    std::size_t n = 0;
    for (const auto& s : students) n += s.samples.size();
    return n;
}

GeneratedStream generate_stream(const ScenarioScript& script) {
    script.validate();
    const std::size_t n = script.roster.size();

    // Episode start times and, for split episodes, which students take the
    // first region.
    std::vector<std::int64_t> starts;
    std::vector<std::vector<bool>> on_first(script.timeline.size());
    std::int64_t t0 = 0;
    for (std::size_t e = 0; e < script.timeline.size(); ++e) {
        starts.push_back(t0);
        t0 += script.timeline[e].duration_ms;
        if (const auto* sp = std::get_if<SplitFocus>(&script.timeline[e].focus)) {
            std::vector<std::size_t> perm(n);
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            Rng rng(script.seed, kSplitStreamBase + e);
            for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
            const auto k = static_cast<std::size_t>(std::llround(sp->ratio * static_cast<double>(n)));
            on_first[e].assign(n, false);
            for (std::size_t i = 0; i < k && i < n; ++i) on_first[e][perm[i]] = true;
        }
    }
    const auto total = static_cast<double>(script.total_ms());
    const auto episode_at = [&starts](double t) {
        const auto it = std::upper_bound(starts.begin(), starts.end(), static_cast<std::int64_t>(std::floor(t)));
        return static_cast<std::size_t>(std::distance(starts.begin(), it) - 1);
    };

    GeneratedStream out;
    out.students.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const StudentProfile& p = script.roster[i];
        StudentStream& st = out.students[i];
        Rng rng(script.seed, 1 + i);
        const double dt = 1000.0 / p.sample_rate_hz;
        const double sigma = std::sqrt(p.mse_target / 2.0);
        const double phase = rng.uniform(0.0, dt);
        const double batch_phase = rng.uniform(0.0, static_cast<double>(script.batch.interval_ms));
        const double p_switch = 1.0 - std::exp(-p.switch_per_s * dt / 1000.0);
        const double p_return = 1.0 - std::exp(-p.return_per_s * dt / 1000.0);
        bool attentive = p.behavior != Behavior::Distracted;

        double next_flush = batch_phase;
        std::size_t batch_begin = 0;
        const auto flush = [&](double at) {
            if (st.samples.size() > batch_begin) {
                st.batches.push_back({static_cast<std::int64_t>(std::ceil(at)), batch_begin, st.samples.size()});
                batch_begin = st.samples.size();
            }
        };

        for (double t = phase; t < total; t += dt) {
            while (t > next_flush) {
                flush(next_flush);
                next_flush += static_cast<double>(script.batch.interval_ms);
            }
            if (p.behavior == Behavior::Intermittent) {
                if (attentive && rng.uniform() < p_switch) {
                    attentive = false;
                } else if (!attentive && rng.uniform() < p_return) {
                    attentive = true;
                }
            }
            const std::size_t e = episode_at(t);
            std::optional<FocusPoint> target;
            if (attentive) {
                const Focus& f = script.timeline[e].focus;
                if (const auto* s = std::get_if<SingleFocus>(&f)) {
                    target = focus_point(s->region);
                } else if (const auto* sp = std::get_if<SplitFocus>(&f)) {
                    target = focus_point(on_first[e][i] ? sp->first : sp->second);
                }
            }
            RawSample s{t, 0.0, 0.0};
            if (target) {
                s.x = rng.normal(target->x, sigma);
                s.y = rng.normal(target->y, sigma);
            } else {
                s.x = rng.uniform();
                s.y = rng.uniform();
            }
            st.samples.push_back(s);
            st.targets.push_back(target);
            if (st.samples.size() - batch_begin >= static_cast<std::size_t>(script.batch.max_points)) {
                flush(t);
            }
        }
        flush(std::min(next_flush, total));
    }
    return out;
}

double measure_mse(std::span<const GazePoint> points, FocusPoint focus) {
    if (points.empty()) throw Error(ErrorCode::EmptyInput, "MSE of an empty point set");
    double acc = 0.0;
    for (const auto& p : points) {
        const double dx = p.x - focus.x;
        const double dy = p.y - focus.y;
        acc += dx * dx + dy * dy;
    }
    return acc / static_cast<double>(points.size());
}

double measure_mse(std::span<const RawSample> samples, FocusPoint focus) {
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "MSE of an empty sample set");
    double acc = 0.0;
    for (const auto& s : samples) {
        const double dx = s.x - focus.x;
        const double dy = s.y - focus.y;
        acc += dx * dx + dy * dy;
    }
    return acc / static_cast<double>(samples.size());
}

std::optional<double> focused_mse(const StudentStream& s) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        if (!s.targets[i]) continue;
        const double dx = s.samples[i].x - s.targets[i]->x;
        const double dy = s.samples[i].y - s.targets[i]->y;
        acc += dx * dx + dy * dy;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return acc / static_cast<double>(n);
}

std::vector<const WindowEvent*> ScenarioSummary::alerts() const {
    std::vector<const WindowEvent*> out;
    for (const auto& w : windows) {
        if (w.alert) out.push_back(&w);
    }
    return out;
}

double ScenarioSummary::mean_score() const {
    if (windows.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& w : windows) acc += w.score.value;
    return acc / static_cast<double>(windows.size());
}

json to_json(const ScenarioSummary& s) {
    json windows = json::array();
    json alerts = json::array();
    for (const auto& w : s.windows) {
        const json row{{"index", w.index},
                       {"start_ms", w.score.window_start},
                       {"end_ms", w.score.window_end},
                       {"score", w.score.value},
                       {"n_points", w.score.n_points},
                       {"n_clusters", w.score.n_clusters},
                       {"alert", w.alert}};
        if (w.alert) alerts.push_back(row);
        windows.push_back(row);
    }
    return json{{"session", s.session},
                {"name", s.name},
                {"students", s.students},
                {"students_failed", s.students_failed},
                {"duration_ms", s.duration_ms},
                {"mean_score", s.mean_score()},
                {"alerts", std::move(alerts)},
                {"windows", std::move(windows)},
                {"metrics", to_json(s.metrics)},
                {"wall_seconds", s.wall_seconds}};
}

std::vector<ScheduledBatch> schedule(const GeneratedStream& stream) {
    std::vector<ScheduledBatch> sends;
    for (std::size_t i = 0; i < stream.students.size(); ++i) {
        for (std::size_t b = 0; b < stream.students[i].batches.size(); ++b) {
            sends.push_back({stream.students[i].batches[b].send_ms, i, b});
        }
    }
    std::sort(sends.begin(), sends.end(), [](const ScheduledBatch& a, const ScheduledBatch& b) {
        return std::tie(a.t_ms, a.student, a.batch) < std::tie(b.t_ms, b.student, b.batch);
    });
    return sends;
}

ScenarioSummary run_scenario(const ScenarioScript& script, const ScenarioOptions& options) {
    return run_stream(script, generate_stream(script), options);
}

ScenarioSummary run_stream(const ScenarioScript& script, const GeneratedStream& stream,
                           const ScenarioOptions& options) {
    const auto wall_start = std::chrono::steady_clock::now();
    const SessionConfig cfg = script.session_config(options.base_config);
    const std::vector<ScheduledBatch> sends = schedule(stream);

    ManualClock clock;
    Session::Options opts;
    opts.async = options.paced;
    opts.clock = clock.clock();
    opts.seed = script.seed;
    opts.created_at = options.created_at;
    if (options.record_path) opts.record = std::make_shared<RecordWriter>(*options.record_path);
    const auto record = opts.record;
    const std::string id = options.session_id.empty() ? "sim-" + std::to_string(script.seed) : options.session_id;
    Session session(id, cfg, std::move(opts));
    if (record && options.reference) record->write(reference_json(*options.reference));

    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < stream.students.size(); ++i) tokens.push_back(session.join());

    const auto paced_start = std::chrono::steady_clock::now();
    for (const auto& s : sends) {
        if (options.paced) {
            const auto due = paced_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                               std::chrono::duration<double, std::milli>(static_cast<double>(s.t_ms) / options.speedup));
            std::this_thread::sleep_until(due);
        }
        clock.set(static_cast<double>(s.t_ms));
        session.tick();
        const auto& st = stream.students[s.student];
        const auto samples = st.batch_samples(st.batches[s.batch]);
        session.ingest(tokens[s.student], samples);
    }
    const auto total = static_cast<double>(script.total_ms());
    clock.set(total);
    session.tick();
    session.drain();
    session.close(total, "scenario complete");

    ScenarioSummary summary;
    summary.session = id;
    summary.name = script.name;
    summary.students = stream.students.size();
    summary.duration_ms = script.total_ms();
    summary.windows = session.history();
    summary.metrics = session.metrics();
    summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return summary;
}

}  // namespace classattn
