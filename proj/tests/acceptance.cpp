// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
//
//   acceptance [--only N]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "classattn/analyze.hpp"
#include "classattn/clustering.hpp"
#include "classattn/record.hpp"
#include "classattn/remote.hpp"
#include "classattn/server.hpp"
#include "classattn/simulator.hpp"
#include "classattn/stats.hpp"
#include "support/oracles.hpp"

using namespace classattn;
using nlohmann::json;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Every admitted sample of a generated class, as one window.
GazeDistribution admitted_window(const ScenarioScript& script) {
    GazeDistribution d;
    const GeneratedStream g = generate_stream(script);
    for (std::size_t s = 0; s < g.students.size(); ++s) {
        for (const RawSample& r : g.students[s].samples) {
            const AdmittedCoord a = admit(r.x, r.y);
            if (a.admitted()) d.points.push_back({StudentId{static_cast<std::uint32_t>(s)}, r.t_ms, a.x, a.y});
        }
    }
    d.window_end = script.total_ms();
    return d;
}

ScenarioScript one_window(std::uint64_t seed, StudentProfile profile, Focus focus) {
    return make_scenario(seed, 31, profile, {{10000, focus}});
}

StudentProfile distracted() {
    StudentProfile p;
    p.behavior = Behavior::Distracted;
    return p;
}

// Small windows scale min_samples down; dynamic eps is the elbow of the
// k-distance curve with a 90th-percentile fallback.
int oracle_min_samples(std::size_t n, int min_samples) {
    return n < 2 * static_cast<std::size_t>(min_samples) ? std::max(5, static_cast<int>(n / 6)) : min_samples;
}

double oracle_eps(const std::vector<GazePoint>& pts, int min_samples) {
    const auto curve = oracle::kdistance(pts, std::max(1, min_samples / 3));
    if (curve.back() > curve.front()) {
        const double v = curve[oracle::elbow_index(curve)];
        if (v > 0) return v;
    }
    const double p90 = curve[static_cast<std::size_t>(std::ceil(0.9 * curve.size())) - 1];
    return p90 > 0 ? p90 : 1e-6;
}

// --- criteria -------------------------------------------------------------

Verdict uniform_cohesiveness() {
    const auto t0 = std::chrono::steady_clock::now();
    RandomizationConfig cfg;
    const GazeDistribution ref = reference_sample(cfg);
    const double c = cohesiveness(ref);
    const double secs = seconds_since(t0);
    const double oracle_c = oracle::two_pass_cohesiveness(ref.points);
    const bool ok = ref.size() == 5000 && std::abs(c - 1.0 / 6.0) <= 0.01 && std::abs(c - oracle_c) <= 1e-12 && secs < 1.0;
    return {ok, fmt("n=%zu cohesiveness=%.6f |c-1/6|=%.5f oracle=%.6f %.3fs", ref.size(), c, std::abs(c - 1.0 / 6.0),
                    oracle_c, secs)};
}

Verdict fixture_replication() {
    const auto t0 = std::chrono::steady_clock::now();
    const Record r = read_record(fs::path(CLASSATTN_FIXTURE_DIR) / "focus_region3.ndjson");
    const GazeDistribution pooled = pooled_distribution(r);
    const double focus = cohesiveness(pooled);
    const double diff = r.reference ? random_focus_diff(pooled, *r.reference) : std::nan("");
    const double secs = seconds_since(t0);
    const bool ok = focus == 0.07365995468797122 && diff == 0.09657548999609998 && secs < 1.0;
    return {ok, fmt("focus=%.17g diff=%.17g points=%zu %.3fs", focus, diff, pooled.size(), secs)};
}

Verdict randomization_at_scale() {
    const auto t0 = std::chrono::steady_clock::now();
    RandomizationConfig cfg;
    cfg.trials = 5000;
    cfg.sample_size = 5000;
    const NullDistribution null = summarize_null(null_distribution(cfg));

    bool ok = true;
    double worst_p = 0.0;
    double min_z = 1e300;
    for (int region = 1; region <= 9; ++region) {
        const GazeDistribution d = admitted_window(one_window(100 + region, StudentProfile{}, SingleFocus{region}));
        const RandomizationResult res = randomization_test(d, cfg, null);
        ok = ok && res.reject_null && res.p < 0.001;
        worst_p = std::max(worst_p, res.p);
        min_z = std::min(min_z, res.z);
    }

    // Uniform windows: each repetition draws its own reference sample.
    const int reps = 100;
    int rejected = 0;
    for (int i = 0; i < reps; ++i) {
        const GazeDistribution d = admitted_window(one_window(5000 + i, distracted(), NoFocus{}));
        RandomizationConfig rep = cfg;
        rep.seed = cfg.seed + 1 + static_cast<std::uint64_t>(i);
        rejected += randomization_test(d, rep, null, reference_sample(rep)).reject_null;
    }
    const double rate = static_cast<double>(rejected) / reps;
    const double secs = seconds_since(t0);
    ok = ok && rate <= 0.10 && secs < 60.0;
    return {ok, fmt("9 attentive regions: max p=%.3g min z=%.1f; uniform reject rate %d/%d=%.2f; null std=%.3g %.1fs",
                    worst_p, min_z, rejected, reps, rate, null.stddev, secs)};
}

Verdict dbscan_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    oracle::Gen gen(424242);
    int identical = 0;
    std::size_t max_n = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GazePoint> pts;
        const int blobs = static_cast<int>(gen.u() * 4);
        for (int b = 0; b < blobs; ++b)
            gen.blob(pts, 20 + static_cast<int>(gen.u() * 120), gen.u(), gen.u(), 0.01 + 0.08 * gen.u());
        gen.uniform(pts, 10 + static_cast<int>(gen.u() * std::max(10, 480 - static_cast<int>(pts.size()))));
        if (pts.size() > 500) pts.resize(500);
        max_n = std::max(max_n, pts.size());

        ClusteringParams p;
        p.min_samples = 5 + static_cast<int>(gen.u() * 100);
        const bool fixed = trial % 2 == 0;
        if (fixed) p.eps_mode = FixedEps{0.01 + 0.1 * gen.u()};
        const ClusteringResult r = dbscan(pts, p);
        const int ms = oracle_min_samples(pts.size(), p.min_samples);
        const double eps = fixed ? std::get<FixedEps>(p.eps_mode).value : oracle_eps(pts, ms);
        identical += r.min_samples_used == ms && r.eps_used == eps &&
                     oracle::canonical(r.labels) == oracle::canonical(oracle::reference_dbscan(pts, eps, ms));
    }
    const double secs = seconds_since(t0);
    return {identical == 100 && secs < 30.0, fmt("%d/100 partition-identical, N<=%zu %.1fs", identical, max_n, secs)};
}

Verdict cluster_shape() {
    const auto t0 = std::chrono::steady_clock::now();
    const ClusteringParams defaults;
    StudentProfile glasses;
    glasses.mse_target = 0.12;
    glasses.label = "glasses";

    int single_miss = 0, single_total = 0, two_miss = 0, none_miss = 0, glasses_worst = 0;
    double lowest = 1.0;
    std::string misses;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (int region = 1; region <= 9; ++region) {
            const GazeDistribution d = admitted_window(one_window(seed, StudentProfile{}, SingleFocus{region}));
            const ClusteringResult c = dbscan(d, defaults);
            const double frac = static_cast<double>(c.largest_cluster()) / static_cast<double>(d.size());
            lowest = std::min(lowest, frac);
            ++single_total;
            if (c.n_clusters() != 1 || frac < 0.80) {
                ++single_miss;
                misses += fmt(" s%llu/r%d:%zu/%.3f", static_cast<unsigned long long>(seed), region, c.n_clusters(), frac);
            }
        }
        two_miss += dbscan(admitted_window(one_window(seed, StudentProfile{}, SplitFocus{1, 9, 0.5})), defaults).n_clusters() != 2;
        none_miss += dbscan(admitted_window(one_window(seed, distracted(), NoFocus{})), defaults).n_clusters() != 0;
        int multi = 0;
        for (int region = 1; region <= 9; ++region)
            multi += dbscan(admitted_window(one_window(seed, glasses, SingleFocus{region})), defaults).n_clusters() > 1;
        glasses_worst = std::max(glasses_worst, multi);
    }

    const double secs = seconds_since(t0);
    const bool ok = single_miss == 0 && two_miss == 0 && none_miss == 0 && glasses_worst <= 2;
    return {ok, fmt("single-focus: %d/%d windows miss 1 cluster >= 80%% (lowest share %.3f;%s); two-focus: %d/5 miss "
                    "2 clusters; uniform: %d/5 miss 0 clusters; glasses: at most %d region(s) with >1 cluster; 5 seeds x 9 "
                    "regions %.1fs",
                    single_miss, single_total, lowest, misses.empty() ? " none" : misses.c_str(), two_miss, none_miss,
                    glasses_worst, secs)};
}

Verdict elbow_detection() {
    std::vector<double> piecewise;
    for (int i = 0; i <= 100; ++i) piecewise.push_back(i <= 80 ? 0.01 * i : 0.8 + 0.2 * (i - 80));
    const auto pe = find_elbow(piecewise);
    const bool piece_ok = pe && pe->index == 80;

    // Knee of (e^{5x} - 1) / (e^5 - 1) against the chord: bisect the
    // derivative of x - f(x).
    const double denom = std::exp(5.0) - 1.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (1.0 - 5.0 * std::exp(5.0 * mid) / denom > 0 ? lo : hi) = mid;
    }
    const double x_star = 0.5 * (lo + hi);
    const int n = 1000;
    std::vector<double> curve;
    for (int i = 0; i < n; ++i) curve.push_back(std::exp(5.0 * i / (n - 1.0)) - 1.0);
    const auto ee = find_elbow(curve);
    const double x_found = ee ? static_cast<double>(ee->index) / (n - 1.0) : -1.0;
    const double rel = std::abs(x_found - x_star) / x_star;
    return {piece_ok && ee && rel <= 0.02,
            fmt("piecewise knee index %zu (expected 80); exponential knee x=%.5f analytic %.5f rel err %.4f",
                pe ? pe->index : 0, x_found, x_star, rel)};
}

Verdict score_separation() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        // 48 s with 10 s windows every 2 s: 20 windows.
        const auto mean = [&](StudentProfile p, Focus f) {
            const ScenarioSummary s = run_scenario(make_scenario(seed, 31, p, {{48000, f}}));
            return std::pair{s.mean_score(), s.windows.size()};
        };
        const auto [att, na] = mean(StudentProfile{}, SingleFocus{5});
        const auto [split, ns] = mean(StudentProfile{}, SplitFocus{1, 9, 0.5});
        const auto [uni, nu] = mean(distracted(), NoFocus{});
        const bool seed_ok = na == 20 && ns == 20 && nu == 20 && att - split >= 0.15 && split - uni >= 0.15;
        ok = ok && seed_ok;
        detail += fmt("%sseed %llu: %.3f > %.3f > %.3f%s", seed == 1 ? "" : "; ", static_cast<unsigned long long>(seed),
                      att, split, uni, seed_ok ? "" : " *");
    }
    return {ok, detail + fmt(" %.1fs", seconds_since(t0))};
}

// A server on an accelerated clock for the networked criteria.
struct LocalServer {
    fs::path records;
    std::unique_ptr<Server> server;
    Endpoint ep;

    LocalServer(double time_scale, const std::string& name) {
        records = fs::temp_directory_path() / ("classattn_acceptance_" + name);
        fs::remove_all(records);
        Server::Options o;
        o.manager.record_dir = records;
        o.manager.time_scale = time_scale;
        server = std::make_unique<Server>(o);
        server->start();
        ep.port = server->port();
    }
    ~LocalServer() {
        server.reset();
        fs::remove_all(records);
    }
};

Verdict end_to_end_alerting() {
    const auto t0 = std::chrono::steady_clock::now();
    const double speedup = 10.0;
    LocalServer s(speedup, "alerting");
    RemoteOptions o;
    o.speedup = speedup;
    const SessionConfig cfg;
    const std::int64_t transition = 60000;

    const ScenarioSummary shift = run_remote_scenario(
        make_scenario(2, 31, StudentProfile{}, {{transition, SingleFocus{5}}, {60000, NoFocus{}}}), s.ep, o);
    const auto alerts = shift.alerts();
    const std::int64_t limit = transition + cfg.window.window_len_ms + 3 * cfg.window.stride_ms;
    const bool shift_ok = alerts.size() == 1 && alerts.front()->score.window_start >= transition - cfg.window.window_len_ms &&
                          alerts.front()->score.window_end <= limit;

    const ScenarioSummary steady = run_remote_scenario(make_scenario(1, 31, StudentProfile{}, {{120000, SingleFocus{5}}}), s.ep, o);

    // Privacy: every frame the instructor socket receives, the summary and
    // the server's record are searched for the students' tokens.
    const auto created = http_request(s.ep, "POST", "/sessions");
    const std::string id = created.body.at("session_id");
    const std::string key = created.body.at("instructor_key");
    WsClient instructor(s.ep, "/sessions/" + id + "/instructor?key=" + key);
    std::vector<std::string> tokens;
    std::vector<std::unique_ptr<WsClient>> students;
    for (int i = 0; i < 5; ++i) {
        tokens.push_back(http_request(s.ep, "POST", "/sessions/" + id + "/join").body.at("token"));
        students.push_back(std::make_unique<WsClient>(s.ep, "/sessions/" + id + "/student"));
    }
    // 2.5 s of wall time is 25 simulated seconds: several windows close.
    for (int round = 0; round < 50; ++round) {
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            json samples = json::array();
            for (int k = 0; k < 15; ++k) samples.push_back({k * 33, 0.4 + 0.01 * k, 0.5});
            students[i]->send(json{{"type", "gaze"}, {"token", tokens[i]}, {"samples", samples}}.dump());
            students[i]->read(5s);
        }
        std::this_thread::sleep_for(50ms);
    }
    http_request(s.ep, "POST", "/sessions/" + id + "/close", std::nullopt, {{"X-Instructor-Key", key}});
    std::vector<std::string> frames;
    while (auto m = instructor.read(3s)) {
        frames.push_back(*m);
        if (json::parse(*m).at("type") == "closed") break;
    }
    frames.push_back(http_request(s.ep, "GET", "/sessions/" + id + "/summary?key=" + key).body.dump());
    std::ifstream rec(s.records / (id + ".ndjson"));
    frames.emplace_back(std::istreambuf_iterator<char>(rec), std::istreambuf_iterator<char>());
    std::size_t leaks = 0;
    std::size_t window_frames = 0;
    for (const auto& f : frames) {
        window_frames += f.find("\"type\":\"window\"") != std::string::npos;
        for (const auto& t : tokens) leaks += f.find(t) != std::string::npos;
    }

    const double secs = seconds_since(t0);
    const bool ok = shift_ok && steady.alerts().empty() && leaks == 0 && window_frames > 0;
    return {ok, fmt("transition at %lld ms: %zu alert(s)%s (limit end %lld); all-attentive: %zu alerts; "
                    "privacy: %zu frames/%zu tokens searched, %zu leaks; simulated 240 s at %.0fx in %.1fs",
                    static_cast<long long>(transition), alerts.size(),
                    alerts.empty() ? "" : fmt(" at [%lld, %lld)", static_cast<long long>(alerts.front()->score.window_start),
                                              static_cast<long long>(alerts.front()->score.window_end)).c_str(),
                    static_cast<long long>(limit), steady.alerts().size(), frames.size(), tokens.size(), leaks, speedup, secs)};
}

Verdict throughput() {
    const auto t0 = std::chrono::steady_clock::now();
    const double speedup = 10.0;
    LocalServer s(speedup, "throughput");
    RemoteOptions o;
    o.speedup = speedup;
    const ScenarioSummary sum = run_remote_scenario(make_scenario(9, 31, StudentProfile{}, {{300000, SingleFocus{5}}}), s.ep, o);
    const double secs = seconds_since(t0);
    const double rate = static_cast<double>(sum.metrics.accepted) / 300.0;
    const bool ok = sum.students_failed == 0 && sum.metrics.skipped_windows == 0 && sum.windows.size() >= 146 &&
                    sum.metrics.latency_p99_ms < 250.0;
    return {ok, fmt("31 clients over WebSocket, 300 s simulated at %.0fx: %.0f samples/s simulated, %zu windows, "
                    "skipped %llu, latency p50 %.1f ms p99 %.1f ms, failed clients %zu %.1fs",
                    speedup, rate, sum.windows.size(), static_cast<unsigned long long>(sum.metrics.skipped_windows),
                    sum.metrics.latency_p50_ms, sum.metrics.latency_p99_ms, sum.students_failed, secs)};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc == 3 && std::strcmp(argv[1], "--only") == 0) only = std::atoi(argv[2]);

    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
        {"uniform-cohesiveness", uniform_cohesiveness},
        {"fixture-replication", fixture_replication},
        {"randomization-at-scale", randomization_at_scale},
        {"dbscan-oracle-equivalence", dbscan_oracle},
        {"cluster-shape", cluster_shape},
        {"elbow-detection", elbow_detection},
        {"score-separation", score_separation},
        {"end-to-end-alerting", end_to_end_alerting},
        {"throughput", throughput},
    };

    spdlog::set_level(spdlog::level::warn);
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", static_cast<int>(i + 1), criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
