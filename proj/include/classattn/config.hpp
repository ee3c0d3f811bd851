/**
 * config.hpp — session and service configuration.
 *
 * JSON layout (every key optional, defaults shown):
 *
 *   {
 *     "host": "0.0.0.0", "port": 8080, "record_dir": "records",
 *     "session": {
 *       "window_ms": 10000, "stride_ms": 2000,
 *       "min_samples": 100, "eps": "dynamic",        // or a positive number
 *       "threshold": 0.5, "consecutive_windows": 3, "cooloff_windows": 5,
 *       "heatmap": {"rows": 32, "cols": 32},
 *       "strategy": "density",                       // or "statistical"
 *       "z_saturation": 50,
 *       "timestamp_source": "server",                // or "client"
 *       "randomization": {"trials": 5000, "sample_size": 5000,
 *                         "seed": 20211, "alpha": 0.05}
 *     }
 *   }
 *
 * Environment overrides, applied after the file:
 *   CLASSATTN_HOST, CLASSATTN_PORT, CLASSATTN_RECORD_DIR, CLASSATTN_WINDOW_MS,
 *   CLASSATTN_STRIDE_MS, CLASSATTN_MIN_SAMPLES, CLASSATTN_EPS,
 *   CLASSATTN_THRESHOLD, CLASSATTN_CONSECUTIVE, CLASSATTN_COOLOFF
 *
 * Every parse or validation failure throws ConfigError naming the field.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "classattn/clustering.hpp"
#include "classattn/scoring.hpp"
#include "classattn/stats.hpp"
#include "classattn/window.hpp"

namespace classattn {

// Server: arrival time on the server clock (default). Client: the sample's
// own timestamp, for accelerated simulations and replay.
enum class TimestampSource { Server, Client };

struct SessionConfig {
    WindowConfig window;
    ClusteringParams clustering;
    AlertPolicy alert;
    int heatmap_rows = 32;
    int heatmap_cols = 32;
    ScoreStrategy strategy = ScoreStrategy::Density;
    double z_saturation = kDefaultZSaturation;
    TimestampSource timestamp_source = TimestampSource::Server;
    RandomizationConfig randomization;

    void validate() const;
};

struct ServiceConfig {
    std::string host = "0.0.0.0";
    std::uint16_t port = 8080;
    std::filesystem::path record_dir = "records";
    SessionConfig session;

    void validate() const;
};

nlohmann::json to_json(const SessionConfig& cfg);

// Fields absent from j keep their value in base.
SessionConfig session_config_from_json(const nlohmann::json& j, const SessionConfig& base = {},
                                       const std::string& prefix = "session");

ServiceConfig service_config_from_json(const nlohmann::json& j);

using EnvLookup = std::function<std::optional<std::string>(const char*)>;
std::optional<std::string> process_env(const char* name);

void apply_env_overrides(ServiceConfig& cfg, const EnvLookup& env = process_env);

// Reads the optional file, applies env overrides, validates.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path,
                                  const EnvLookup& env = process_env);

}  // namespace classattn
