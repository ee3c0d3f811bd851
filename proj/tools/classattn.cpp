// classattn: run the session server, simulate classes, analyze and replay
// session records.
//
// Exit codes: 0 ok, 1 runtime failure, 2 invalid configuration or usage.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <pthread.h>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "classattn/analyze.hpp"
#include "classattn/config.hpp"
#include "classattn/error.hpp"
#include "classattn/remote.hpp"
#include "classattn/server.hpp"
#include "classattn/simulator.hpp"

using namespace classattn;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct ServeArgs {
    std::optional<std::filesystem::path> config;
    std::optional<std::string> host;
    std::optional<int> port;
    std::optional<std::filesystem::path> record_dir;
    double time_scale = 1.0;
    std::optional<std::filesystem::path> port_file;
};

struct SimulateArgs {
    std::filesystem::path script;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> config;
    std::filesystem::path out = "out";
    std::optional<std::string> endpoint;
    bool paced = false;
    double speedup = 10.0;
};

struct AnalyzeArgs {
    std::filesystem::path record;
    std::vector<std::string> analyses;
    bool randomization_test = false;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out = "analysis";
};

struct ReplayArgs {
    std::filesystem::path record;
    std::optional<std::filesystem::path> out;
};

void write_json(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::NotFound, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

int serve(const ServeArgs& a) {
    ServiceConfig cfg = load_service_config(a.config);
    if (a.host) cfg.host = *a.host;
    if (a.port) {
        if (*a.port < 0 || *a.port > 65535) throw ConfigError("port", "must be in [0, 65535]");
        cfg.port = static_cast<std::uint16_t>(*a.port);
    }
    if (a.record_dir) cfg.record_dir = *a.record_dir;
    cfg.validate();

    // Signals are taken synchronously by this thread; block them before any
    // other thread starts so none of those receives them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Server::Options o;
    o.host = cfg.host;
    o.port = cfg.port;
    o.manager.async = true;
    o.manager.record_dir = cfg.record_dir;
    o.manager.defaults = cfg.session;
    o.manager.time_scale = a.time_scale;
    Server server(o);
    server.start();
    spdlog::info("listening on {}:{}, records in {}", cfg.host, server.port(), cfg.record_dir.string());
    if (a.port_file) {
        std::ofstream(*a.port_file) << server.port() << '\n';
    }

    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("received {}, closing sessions", sig == SIGTERM ? "SIGTERM" : "SIGINT");
    server.stop(sig == SIGTERM ? "sigterm" : "sigint");
    return 0;
}

int simulate(const SimulateArgs& a) {
    ScenarioScript script = load_scenario(a.script);
    if (a.seed) script.seed = *a.seed;
    const SessionConfig base = a.config ? load_service_config(a.config).session : SessionConfig{};
    script.session_config(base).validate();

    ScenarioSummary summary;
    if (a.endpoint) {
        RemoteOptions o;
        o.speedup = a.speedup;
        o.base_config = base;
        summary = run_remote_scenario(script, Endpoint::parse(*a.endpoint), o);
    } else {
        ScenarioOptions o;
        o.paced = a.paced;
        o.speedup = a.speedup;
        o.base_config = base;
        o.session_id = "sim-" + std::to_string(script.seed);
        o.record_path = a.out / (o.session_id + ".ndjson");
        summary = run_scenario(script, o);
        spdlog::info("record written to {}", o.record_path->string());
    }
    write_json(a.out / "summary.json", to_json(summary));
    std::printf("%s: %zu windows, %zu alerts, mean score %.3f, p99 latency %.1f ms, skipped %llu\n",
                script.name.c_str(), summary.windows.size(), summary.alerts().size(), summary.mean_score(),
                summary.metrics.latency_p99_ms, static_cast<unsigned long long>(summary.metrics.skipped_windows));
    return 0;
}

int analyze(const AnalyzeArgs& a) {
    AnalyzeOptions o;
    if (!a.analyses.empty() || a.randomization_test) {
        o.analyses.clear();
        for (const auto& name : a.analyses) o.analyses.push_back(parse_analysis(name));
        if (a.randomization_test) o.analyses.push_back(Analysis::Randomization);
    }
    o.trials = a.trials;
    o.seed = a.seed;
    const Record r = read_record(a.record);
    const AnalyzeReport rep = analyze_record(r, a.out, o);
    for (const auto& w : rep.warnings) spdlog::warn("{}", w);
    std::printf("%zu files written to %s (%zu corrupt lines skipped)\n", rep.files.size(), a.out.string().c_str(),
                rep.corrupt_lines);
    return 0;
}

int replay(const ReplayArgs& a) {
    const Record r = read_record(a.record);
    const ReplayResult res = replay_record(r, a.out);
    for (const auto& d : res.differences) spdlog::error("{}", d);
    std::printf("recorded %zu windows, replayed %zu, mismatches %zu: %s\n", res.recorded.size(), res.replayed.size(),
                res.mismatches, res.ok() ? "identical" : "DIFFERENT");
    return res.ok() ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("classattn");
    spdlog::set_default_logger(logger);

    CLI::App app{"Class attention monitoring: server, simulator and offline analysis"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

    ServeArgs serve_args;
    auto* serve_cmd = app.add_subcommand("serve", "Run the session server");
    serve_cmd->add_option("--config", serve_args.config, "service config file (JSON)")->check(CLI::ExistingFile);
    serve_cmd->add_option("--host", serve_args.host, "listen address");
    serve_cmd->add_option("--port", serve_args.port, "listen port (0 picks a free one)");
    serve_cmd->add_option("--record-dir", serve_args.record_dir, "directory for session records");
    serve_cmd->add_option("--time-scale", serve_args.time_scale, "session clock speed relative to wall time")
        ->check(CLI::PositiveNumber);
    serve_cmd->add_option("--port-file", serve_args.port_file, "write the bound port to this file");

    SimulateArgs sim_args;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a scenario script in-process or against a server");
    sim_cmd->add_option("script", sim_args.script, "scenario file (JSON)")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--seed", sim_args.seed, "override the script seed");
    sim_cmd->add_option("--config", sim_args.config, "service config file; its session section is the base")
        ->check(CLI::ExistingFile);
    sim_cmd->add_option("--out", sim_args.out, "output directory")->capture_default_str();
    sim_cmd->add_option("--endpoint", sim_args.endpoint, "server host:port (default: in-process)");
    sim_cmd->add_flag("--paced", sim_args.paced, "in-process: pace against the wall clock with the async worker");
    sim_cmd->add_option("--speedup", sim_args.speedup, "simulated ms per wall ms when paced or remote")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    AnalyzeArgs an_args;
    auto* an_cmd = app.add_subcommand("analyze", "Write plot-ready tables from a session record");
    an_cmd->add_option("record", an_args.record, "session record (NDJSON)")->required();
    an_cmd->add_option("--analysis", an_args.analyses,
                       "cohesiveness, randomization, dbscan, heatmap, score-series (repeatable; default all)");
    an_cmd->add_flag("--randomization-test", an_args.randomization_test, "same as --analysis randomization");
    an_cmd->add_option("--trials", an_args.trials, "override randomization trials")->check(CLI::PositiveNumber);
    an_cmd->add_option("--seed", an_args.seed, "override randomization seed");
    an_cmd->add_option("--out", an_args.out, "output directory")->capture_default_str();

    ReplayArgs rp_args;
    auto* rp_cmd = app.add_subcommand("replay", "Re-run a record and compare the published events");
    rp_cmd->add_option("record", rp_args.record, "session record (NDJSON)")->required();
    rp_cmd->add_option("--out", rp_args.out, "write the replay's own record here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*serve_cmd) return serve(serve_args);
        if (*sim_cmd) return simulate(sim_args);
        if (*an_cmd) return analyze(an_args);
        if (*rp_cmd) return replay(rp_args);
    } catch (const ConfigError& e) {
        spdlog::error("invalid configuration: {}", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return kExitRuntime;
}
