#include "classattn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "classattn/error.hpp"

namespace classattn {

using nlohmann::json;

namespace {

// Library validators name bare fields; config users see JSON paths.
std::string json_field(const std::string& field) {
    return field == "window_len_ms" ? "window_ms" : field;
}

template <typename F>
void with_prefix(const std::string& prefix, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        const std::string& msg = e.what();
        const auto colon = msg.find(": ");
        throw ConfigError(prefix + "." + json_field(e.field()),
                          colon == std::string::npos ? msg : msg.substr(colon + 2));
    }
}

const json* child(const json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

std::int64_t get_int(const json& v, const std::string& field) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    throw ConfigError(field, "expected an integer");
}

double get_number(const json& v, const std::string& field) {
    if (!v.is_number()) throw ConfigError(field, "expected a number");
    return v.get<double>();
}

std::string get_string(const json& v, const std::string& field) {
    if (!v.is_string()) throw ConfigError(field, "expected a string");
    return v.get<std::string>();
}

int narrow_int(std::int64_t v, const std::string& field) {
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw ConfigError(field, "out of range");
    }
    return static_cast<int>(v);
}

EpsMode parse_eps(const json& v, const std::string& field) {
    if (v.is_string() && v.get<std::string>() == "dynamic") return DynamicEps{};
    if (v.is_number()) return FixedEps{v.get<double>()};
    throw ConfigError(field, "expected \"dynamic\" or a positive number");
}

std::int64_t parse_env_int(const std::string& s, const std::string& field) {
    std::int64_t v = 0;
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc{} || r.ptr != end) throw ConfigError(field, "expected an integer, got '" + s + "'");
    return v;
}

double parse_env_double(const std::string& s, const std::string& field) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc{} || r.ptr != end) throw ConfigError(field, "expected a number, got '" + s + "'");
    return v;
}

}  // namespace

void SessionConfig::validate() const {
    with_prefix("session", [&] { window.validate(); });
    with_prefix("session", [&] { clustering.validate(); });
    with_prefix("session", [&] { alert.validate(); });
    with_prefix("session.randomization", [&] { randomization.validate(); });
    if (heatmap_rows < 1 || heatmap_rows > 1024) throw ConfigError("session.heatmap.rows", "must be in [1, 1024]");
    if (heatmap_cols < 1 || heatmap_cols > 1024) throw ConfigError("session.heatmap.cols", "must be in [1, 1024]");
    if (!(z_saturation > 0.0) || !std::isfinite(z_saturation)) {
        throw ConfigError("session.z_saturation", "must be positive");
    }
}

void ServiceConfig::validate() const {
    if (host.empty()) throw ConfigError("host", "must not be empty");
    if (record_dir.empty()) throw ConfigError("record_dir", "must not be empty");
    session.validate();
}

json to_json(const SessionConfig& cfg) {
    json eps;
    if (const auto* fixed = std::get_if<FixedEps>(&cfg.clustering.eps_mode)) {
        eps = fixed->value;
    } else {
        eps = "dynamic";
    }
    return json{
        {"window_ms", cfg.window.window_len_ms},
        {"stride_ms", cfg.window.stride_ms},
        {"min_samples", cfg.clustering.min_samples},
        {"eps", eps},
        {"threshold", cfg.alert.threshold},
        {"consecutive_windows", cfg.alert.consecutive_windows},
        {"cooloff_windows", cfg.alert.cooloff_windows},
        {"heatmap", {{"rows", cfg.heatmap_rows}, {"cols", cfg.heatmap_cols}}},
        {"strategy", strategy_name(cfg.strategy)},
        {"z_saturation", cfg.z_saturation},
        {"timestamp_source", cfg.timestamp_source == TimestampSource::Server ? "server" : "client"},
        {"randomization",
         {{"trials", cfg.randomization.trials},
          {"sample_size", cfg.randomization.sample_size},
          {"seed", cfg.randomization.seed},
          {"alpha", cfg.randomization.alpha}}},
    };
}

SessionConfig session_config_from_json(const json& j, const SessionConfig& base, const std::string& prefix) {
    if (!j.is_object()) throw ConfigError(prefix, "expected an object");
    SessionConfig cfg = base;
    const auto f = [&prefix](const char* name) { return prefix + "." + name; };

    if (const auto* v = child(j, "window_ms")) cfg.window.window_len_ms = get_int(*v, f("window_ms"));
    if (const auto* v = child(j, "stride_ms")) cfg.window.stride_ms = get_int(*v, f("stride_ms"));
    if (const auto* v = child(j, "min_samples")) cfg.clustering.min_samples = narrow_int(get_int(*v, f("min_samples")), f("min_samples"));
    if (const auto* v = child(j, "eps")) cfg.clustering.eps_mode = parse_eps(*v, f("eps"));
    if (const auto* v = child(j, "threshold")) cfg.alert.threshold = get_number(*v, f("threshold"));
    if (const auto* v = child(j, "consecutive_windows")) {
        cfg.alert.consecutive_windows = narrow_int(get_int(*v, f("consecutive_windows")), f("consecutive_windows"));
    }
    if (const auto* v = child(j, "cooloff_windows")) {
        cfg.alert.cooloff_windows = narrow_int(get_int(*v, f("cooloff_windows")), f("cooloff_windows"));
    }
    if (const auto* h = child(j, "heatmap")) {
        if (!h->is_object()) throw ConfigError(f("heatmap"), "expected an object");
        if (const auto* v = child(*h, "rows")) cfg.heatmap_rows = narrow_int(get_int(*v, f("heatmap.rows")), f("heatmap.rows"));
        if (const auto* v = child(*h, "cols")) cfg.heatmap_cols = narrow_int(get_int(*v, f("heatmap.cols")), f("heatmap.cols"));
    }
    if (const auto* v = child(j, "strategy")) {
        const auto s = parse_strategy(get_string(*v, f("strategy")));
        if (!s) throw ConfigError(f("strategy"), "expected \"density\" or \"statistical\"");
        cfg.strategy = *s;
    }
    if (const auto* v = child(j, "z_saturation")) cfg.z_saturation = get_number(*v, f("z_saturation"));
    if (const auto* v = child(j, "timestamp_source")) {
        const auto s = get_string(*v, f("timestamp_source"));
        if (s == "server") {
            cfg.timestamp_source = TimestampSource::Server;
        } else if (s == "client") {
            cfg.timestamp_source = TimestampSource::Client;
        } else {
            throw ConfigError(f("timestamp_source"), "expected \"server\" or \"client\"");
        }
    }
    if (const auto* r = child(j, "randomization")) {
        if (!r->is_object()) throw ConfigError(f("randomization"), "expected an object");
        const auto rf = [&f](const char* name) { return f("randomization") + "." + name; };
        if (const auto* v = child(*r, "trials")) cfg.randomization.trials = narrow_int(get_int(*v, rf("trials")), rf("trials"));
        if (const auto* v = child(*r, "sample_size")) {
            cfg.randomization.sample_size = narrow_int(get_int(*v, rf("sample_size")), rf("sample_size"));
        }
        if (const auto* v = child(*r, "seed")) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
                throw ConfigError(rf("seed"), "expected a non-negative integer");
            }
            cfg.randomization.seed = v->get<std::uint64_t>();
        }
        if (const auto* v = child(*r, "alpha")) cfg.randomization.alpha = get_number(*v, rf("alpha"));
    }
    return cfg;
}

ServiceConfig service_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
    ServiceConfig cfg;
    if (const auto* v = child(j, "host")) cfg.host = get_string(*v, "host");
    if (const auto* v = child(j, "port")) {
        const auto port = get_int(*v, "port");
        if (port < 0 || port > 65535) throw ConfigError("port", "must be in [0, 65535]");
        cfg.port = static_cast<std::uint16_t>(port);
    }
    if (const auto* v = child(j, "record_dir")) cfg.record_dir = get_string(*v, "record_dir");
    if (const auto* v = child(j, "session")) cfg.session = session_config_from_json(*v, cfg.session, "session");
    return cfg;
}

std::optional<std::string> process_env(const char* name) {
    if (const char* v = std::getenv(name)) return std::string(v);
    return std::nullopt;
}

void apply_env_overrides(ServiceConfig& cfg, const EnvLookup& env) {
    if (auto v = env("CLASSATTN_HOST")) cfg.host = *v;
    if (auto v = env("CLASSATTN_PORT")) {
        const auto port = parse_env_int(*v, "port");
        if (port < 0 || port > 65535) throw ConfigError("port", "must be in [0, 65535]");
        cfg.port = static_cast<std::uint16_t>(port);
    }
    if (auto v = env("CLASSATTN_RECORD_DIR")) cfg.record_dir = *v;
    if (auto v = env("CLASSATTN_WINDOW_MS")) cfg.session.window.window_len_ms = parse_env_int(*v, "session.window_ms");
    if (auto v = env("CLASSATTN_STRIDE_MS")) cfg.session.window.stride_ms = parse_env_int(*v, "session.stride_ms");
    if (auto v = env("CLASSATTN_MIN_SAMPLES")) {
        cfg.session.clustering.min_samples =
            narrow_int(parse_env_int(*v, "session.min_samples"), "session.min_samples");
    }
    if (auto v = env("CLASSATTN_EPS")) {
        if (*v == "dynamic") {
            cfg.session.clustering.eps_mode = DynamicEps{};
        } else {
            cfg.session.clustering.eps_mode = FixedEps{parse_env_double(*v, "session.eps")};
        }
    }
    if (auto v = env("CLASSATTN_THRESHOLD")) cfg.session.alert.threshold = parse_env_double(*v, "session.threshold");
    if (auto v = env("CLASSATTN_CONSECUTIVE")) {
        cfg.session.alert.consecutive_windows =
            narrow_int(parse_env_int(*v, "session.consecutive_windows"), "session.consecutive_windows");
    }
    if (auto v = env("CLASSATTN_COOLOFF")) {
        cfg.session.alert.cooloff_windows =
            narrow_int(parse_env_int(*v, "session.cooloff_windows"), "session.cooloff_windows");
    }
}

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env) {
    ServiceConfig cfg;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("config", "cannot open " + path->string());
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("config", std::string("malformed JSON: ") + e.what());
        }
        cfg = service_config_from_json(j);
    }
    apply_env_overrides(cfg, env);
    cfg.validate();
    return cfg;
}

}  // namespace classattn
