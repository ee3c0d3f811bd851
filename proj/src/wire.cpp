#include "classattn/wire.hpp"

#include <limits>

namespace classattn {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double number_or_nan(const json& v) { return v.is_number() ? v.get<double>() : kNaN; }

const json& require(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) {
        throw Error(ErrorCode::Parse, std::string("missing field '") + key + "'");
    }
    return *it;
}

template <typename T>
T require_as(const json& j, const char* key) {
    const json& v = require(j, key);
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::Parse, std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace

json samples_to_json(const std::vector<RawSample>& samples) {
    json arr = json::array();
    for (const auto& s : samples) {
        arr.push_back(json::array({s.t_ms, s.x, s.y}));
    }
    return arr;
}

std::vector<RawSample> samples_from_json(const json& j) {
    if (!j.is_array()) {
        throw Error(ErrorCode::Parse, "samples must be an array");
    }
    std::vector<RawSample> out;
    out.reserve(j.size());
    for (const auto& s : j) {
        if (s.is_array() && s.size() == 3) {
            out.push_back({number_or_nan(s[0]), number_or_nan(s[1]), number_or_nan(s[2])});
        } else {
            out.push_back({kNaN, kNaN, kNaN});
        }
    }
    return out;
}

GazeMessage gaze_message_from_json(const json& j) {
    if (!j.is_object() || require_as<std::string>(j, "type") != "gaze") {
        throw Error(ErrorCode::Parse, "expected a gaze message");
    }
    GazeMessage m;
    m.token = require_as<std::string>(j, "token");
    m.samples = samples_from_json(require(j, "samples"));
    return m;
}

GazeMessage parse_gaze_message(std::string_view text) { return gaze_message_from_json(parse_object(text)); }

json to_json(const GazeMessage& m) {
    return json{{"type", "gaze"}, {"token", m.token}, {"samples", samples_to_json(m.samples)}};
}

json to_json(const WindowEvent& e) {
    const AttentionScore& s = e.score;
    return json{
        {"type", "window"},
        {"session", e.session},
        {"index", e.index},
        {"start_ms", s.window_start},
        {"end_ms", s.window_end},
        {"score", s.value},
        {"n_points", s.n_points},
        {"n_clusters", s.n_clusters},
        {"heatmap", {{"rows", e.heatmap.rows}, {"cols", e.heatmap.cols}, {"counts", e.heatmap.counts}}},
        {"alert", e.alert},
        {"threshold", e.threshold},
        {"strategy", strategy_name(s.strategy)},
        {"clustered_fraction", s.clustered_fraction},
        {"concentration", s.concentration},
        {"auto_scaled", s.auto_scaled},
        {"error", s.error},
    };
}

WindowEvent window_event_from_json(const json& j) {
    if (!j.is_object() || require_as<std::string>(j, "type") != "window") {
        throw Error(ErrorCode::Parse, "expected a window event");
    }
    WindowEvent e;
    e.session = require_as<std::string>(j, "session");
    e.index = j.value("index", std::uint64_t{0});
    AttentionScore& s = e.score;
    s.window_start = require_as<std::int64_t>(j, "start_ms");
    s.window_end = require_as<std::int64_t>(j, "end_ms");
    s.value = require_as<double>(j, "score");
    s.n_points = require_as<std::size_t>(j, "n_points");
    s.n_clusters = require_as<std::size_t>(j, "n_clusters");
    e.alert = require_as<bool>(j, "alert");
    const json& h = require(j, "heatmap");
    e.heatmap.rows = require_as<int>(h, "rows");
    e.heatmap.cols = require_as<int>(h, "cols");
    e.heatmap.counts = require_as<std::vector<std::uint32_t>>(h, "counts");
    e.heatmap.window_start = s.window_start;
    e.heatmap.window_end = s.window_end;
    e.threshold = j.value("threshold", 0.5);
    s.strategy = parse_strategy(j.value("strategy", std::string("density"))).value_or(ScoreStrategy::Density);
    s.clustered_fraction = j.value("clustered_fraction", 0.0);
    s.concentration = j.value("concentration", 0.0);
    s.auto_scaled = j.value("auto_scaled", false);
    s.error = j.value("error", false);
    return e;
}

json ack_json(std::size_t accepted, std::size_t dropped) {
    return json{{"type", "ack"}, {"accepted", accepted}, {"dropped", dropped}};
}

json error_json(ErrorCode code, std::string_view message) {
    return json{{"type", "error"}, {"code", error_code_name(code)}, {"message", message}};
}

json threshold_ack_json(double threshold) { return json{{"type", "threshold_ack"}, {"threshold", threshold}}; }

json closed_json(std::string_view session, std::int64_t end_ms) {
    return json{{"type", "closed"}, {"session", session}, {"end_ms", end_ms}};
}

json parse_object(std::string_view text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(ErrorCode::Parse, "message is not a JSON object");
    }
    return j;
}

}  // namespace classattn
