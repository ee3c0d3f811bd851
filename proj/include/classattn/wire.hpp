/**
 * wire.hpp — JSON messages exchanged with student and instructor clients.
 *
 * One UTF-8 JSON object per text frame.
 *
 *   student -> server     {"type":"gaze","token":"...","samples":[[t_ms,x,y],...]}
 *   server  -> student    {"type":"ack","accepted":n,"dropped":n}
 *   server  -> instructor {"type":"window","session":"...","index":k,"start_ms":..,"end_ms":..,
 *                          "score":..,"n_points":..,"n_clusters":..,
 *                          "heatmap":{"rows":32,"cols":32,"counts":[...]},"alert":bool,
 *                          "threshold":..,"strategy":"density","clustered_fraction":..,
 *                          "concentration":..,"auto_scaled":bool,"error":bool}
 *   instructor -> server  {"type":"set_threshold","threshold":0.3}
 *   server  -> instructor {"type":"threshold_ack","threshold":0.3}
 *   server  -> instructor {"type":"closed","session":"...","end_ms":..}
 *   server  -> any        {"type":"error","code":"auth","message":"..."}
 *
 * Instructor messages never carry student tokens or per-student data.
 */

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "classattn/error.hpp"
#include "classattn/heatmap.hpp"
#include "classattn/scoring.hpp"

namespace classattn {

// A sample as received. Entries that are not three numbers arrive as NaN
// and are dropped at admission, so one bad sample never rejects its batch.
struct RawSample {
    double t_ms = 0.0;
    double x = 0.0;
    double y = 0.0;
};

struct GazeMessage {
    std::string token;
    std::vector<RawSample> samples;
};

struct WindowEvent {
    std::string session;
    std::uint64_t index = 0;
    AttentionScore score;
    HeatmapGrid heatmap;
    bool alert = false;
    double threshold = 0.5;
};

nlohmann::json samples_to_json(const std::vector<RawSample>& samples);
std::vector<RawSample> samples_from_json(const nlohmann::json& j);

// Throws Error(Parse) on a missing type, token or samples array.
GazeMessage gaze_message_from_json(const nlohmann::json& j);
GazeMessage parse_gaze_message(std::string_view text);
nlohmann::json to_json(const GazeMessage& m);

nlohmann::json to_json(const WindowEvent& e);
// Throws Error(Parse) if required fields are missing.
WindowEvent window_event_from_json(const nlohmann::json& j);

nlohmann::json ack_json(std::size_t accepted, std::size_t dropped);
nlohmann::json error_json(ErrorCode code, std::string_view message);
nlohmann::json threshold_ack_json(double threshold);
nlohmann::json closed_json(std::string_view session, std::int64_t end_ms);

// Parses text as a JSON object; throws Error(Parse) otherwise.
nlohmann::json parse_object(std::string_view text);

}  // namespace classattn
