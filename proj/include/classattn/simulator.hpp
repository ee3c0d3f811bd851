/**
 * simulator.hpp — synthetic classroom gaze streams.
 *
 * Scenario script (JSON):
 *
 *   {
 *     "name": "attentive-then-distracted",
 *     "seed": 7,
 *     "batch": {"max_points": 32, "interval_ms": 500},
 *     "class": [
 *       {"count": 31, "behavior": "attentive",       // attentive | distracted | intermittent
 *        "mse_target": 0.07, "sample_rate_hz": 30,
 *        "switch_per_s": 0.05, "return_per_s": 0.05, // intermittent only
 *        "label": "default"}
 *     ],
 *     "timeline": [
 *       {"duration_ms": 60000, "focus": 5},                         // region 1..9
 *       {"duration_ms": 60000, "focus": null},                      // no focus
 *       {"duration_ms": 40000, "focus": {"split": [1, 9], "ratio": 0.5}}
 *     ],
 *     "session": { ...session config overrides, see config.hpp... }
 *   }
 *
 * Regions are numbered 1..9 row-major from the top-left; region r has its
 * focus at x = {1/6, 1/2, 5/6}[(r-1) % 3], y = {1/6, 1/2, 5/6}[(r-1) / 3].
 *
 * Attentive gaze is isotropic Gaussian noise around the active focus with
 * per-axis sigma = sqrt(mse_target / 2); without a focus it is uniform.
 * Distracted gaze is uniform on the unit square. Intermittent students flip
 * between the two with the given per-second rates. Samples are not clamped;
 * admission happens at the server.
 *
 * Determinism: student i draws from Rng(seed, 1 + i); the split assignment
 * of episode e draws from Rng(seed, kSplitStreamBase + e).
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "classattn/config.hpp"
#include "classattn/session.hpp"
#include "classattn/wire.hpp"

namespace classattn {

struct FocusPoint {
    double x = 0.5;
    double y = 0.5;
};

// Throws ConfigError unless 1 <= region <= 9.
FocusPoint focus_point(int region);

enum class Behavior { Attentive, Distracted, Intermittent };

const char* behavior_name(Behavior b) noexcept;

struct StudentProfile {
    Behavior behavior = Behavior::Attentive;
    double mse_target = 0.07;
    double sample_rate_hz = 30.0;
    double switch_per_s = 0.05;  // attentive -> distracted
    double return_per_s = 0.05;  // distracted -> attentive
    std::string label = "default";
};

struct NoFocus {};
struct SingleFocus {
    int region = 5;
};
struct SplitFocus {
    int first = 1;
    int second = 9;
    double ratio = 0.5;  // share of students on the first region
};
using Focus = std::variant<NoFocus, SingleFocus, SplitFocus>;

struct Episode {
    std::int64_t duration_ms = 10000;
    Focus focus = SingleFocus{};
};

struct BatchPolicy {
    int max_points = 32;
    std::int64_t interval_ms = 500;
};

struct ScenarioScript {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    BatchPolicy batch;
    std::vector<StudentProfile> roster;
    std::vector<Episode> timeline;
    nlohmann::json session_overrides = nlohmann::json::object();

    std::int64_t total_ms() const;
    // Throws ConfigError naming the offending field.
    void validate() const;
    // Default session config with this script's overrides applied.
    SessionConfig session_config(const SessionConfig& base = {}) const;
};

ScenarioScript scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioScript& s);
ScenarioScript load_scenario(const std::filesystem::path& path);

// A uniform class of `students` profiles with one episode per entry.
ScenarioScript make_scenario(std::uint64_t seed, int students, StudentProfile profile, std::vector<Episode> timeline);

inline constexpr std::uint64_t kSplitStreamBase = 1u << 20;

struct StudentBatch {
    std::int64_t send_ms = 0;
    std::size_t begin = 0;  // sample index range [begin, end)
    std::size_t end = 0;
};

struct StudentStream {
    std::vector<RawSample> samples;
    // Focus the student was looking at, or nullopt for uniform gaze.
    std::vector<std::optional<FocusPoint>> targets;
    std::vector<StudentBatch> batches;

    std::vector<RawSample> batch_samples(const StudentBatch& b) const {
        return {samples.begin() + static_cast<std::ptrdiff_t>(b.begin), samples.begin() + static_cast<std::ptrdiff_t>(b.end)};
    }
};

struct GeneratedStream {
    std::vector<StudentStream> students;

    std::size_t sample_count() const;
};

GeneratedStream generate_stream(const ScenarioScript& script);

// Mean of (x - fx)^2 + (y - fy)^2. Throws Error(EmptyInput).
double measure_mse(std::span<const GazePoint> points, FocusPoint focus);
double measure_mse(std::span<const RawSample> samples, FocusPoint focus);

// MSE of the focused samples of one student against their targets;
// nullopt when the student never looked at a focus.
std::optional<double> focused_mse(const StudentStream& s);

struct ScenarioOptions {
    // Run the session's async worker and pace ingestion against the wall
    // clock at `speedup` simulated ms per real ms. Otherwise the session is
    // synchronous and driven by a virtual clock as fast as possible.
    bool paced = false;
    double speedup = 10.0;
    std::optional<std::filesystem::path> record_path;
    std::string session_id;  // default "sim-<seed>"
    std::string created_at;  // default: current UTC time
    // Written to the record as the randomization reference sample.
    std::optional<GazeDistribution> reference;
    SessionConfig base_config;
};

struct ScenarioSummary {
    std::string session;
    std::string name;
    std::size_t students = 0;
    std::size_t students_failed = 0;
    std::int64_t duration_ms = 0;
    std::vector<WindowEvent> windows;
    SessionMetrics metrics;
    double wall_seconds = 0.0;

    std::vector<const WindowEvent*> alerts() const;
    double mean_score() const;
};

nlohmann::json to_json(const ScenarioSummary& s);

// In-process run: drives a Session directly, without sockets.
// Batches of all students in the order they reach the session: by send
// time, then student, then batch.
struct ScheduledBatch {
    std::int64_t t_ms;
    std::size_t student;
    std::size_t batch;
};
std::vector<ScheduledBatch> schedule(const GeneratedStream& stream);

ScenarioSummary run_scenario(const ScenarioScript& script, const ScenarioOptions& options = {});
// Plays an already generated (possibly edited) stream of the script.
ScenarioSummary run_stream(const ScenarioScript& script, const GeneratedStream& stream,
                           const ScenarioOptions& options = {});

}  // namespace classattn
