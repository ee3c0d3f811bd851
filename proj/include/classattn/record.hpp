/**
 * record.hpp — append-only per-session record files (NDJSON).
 *
 * One JSON object per line, in write order:
 *
 *   header     {"type":"header","version":1,"session":id,"created_at":iso8601,
 *               "seed":u64,"config":{session config, see config.hpp}}
 *   batch      {"type":"batch","t_ms":arrival,"accepted":n,"dropped":n,
 *               "samples":[[t_ms,x,y],...]}          raw samples as received
 *   window     the instructor window event, verbatim (see wire.hpp)
 *   threshold  {"type":"threshold","threshold":x}   live threshold change
 *   reference  {"type":"reference","points":[[x,y],...]}
 *              optional recorded uniform sample for the randomization test
 *   close      {"type":"close","reason":s,"end_ms":t,"windows":n,"accepted":n,
 *               "dropped":n,"dropped_late":n,"skipped_windows":n}
 *
 * Lines are flushed as written, so a killed process leaves a readable prefix.
 * Student tokens are never written.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "classattn/config.hpp"
#include "classattn/gaze.hpp"
#include "classattn/wire.hpp"

namespace classattn {

inline constexpr int kRecordVersion = 1;

class RecordWriter {
public:
    // Creates parent directories; truncates an existing file.
    explicit RecordWriter(const std::filesystem::path& path);
    explicit RecordWriter(std::unique_ptr<std::ostream> out);

    void write(const nlohmann::json& line);

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::unique_ptr<std::ostream> out_;
    std::mutex mu_;
};

nlohmann::json header_json(const std::string& session, const std::string& created_at, std::uint64_t seed,
                           const SessionConfig& config);
nlohmann::json batch_json(double t_ms, std::size_t accepted, std::size_t dropped,
                          const std::vector<RawSample>& samples);
nlohmann::json reference_json(const GazeDistribution& reference);

struct RecordBatch {
    double t_ms = 0.0;
    std::size_t accepted = 0;
    std::size_t dropped = 0;
    std::vector<RawSample> samples;
};

struct CloseInfo {
    std::string reason;
    std::int64_t end_ms = 0;
    std::uint64_t windows = 0;
    std::uint64_t accepted = 0;
    std::uint64_t dropped = 0;
    std::uint64_t dropped_late = 0;
    std::uint64_t skipped_windows = 0;
};

nlohmann::json to_json(const CloseInfo& c);

struct Record {
    std::string session;
    std::uint64_t seed = 0;
    SessionConfig config;
    bool has_header = false;
    std::vector<RecordBatch> batches;
    std::vector<WindowEvent> windows;
    std::optional<GazeDistribution> reference;
    // (number of window lines before the change, new threshold)
    std::vector<std::pair<std::size_t, double>> threshold_changes;
    std::optional<CloseInfo> close;
    std::size_t corrupt_lines = 0;
    std::vector<std::string> warnings;
};

// Unreadable or malformed lines are skipped, counted and described in
// warnings; only a missing file throws.
Record read_record(const std::filesystem::path& path);
Record parse_record(std::istream& in);

// Points admitted by the recorded session, in ingest order: admission rule
// applied to every sample, timestamped per the header's timestamp source.
// Batches after the close time are ignored.
std::vector<GazePoint> admitted_points(const Record& r);

// Current UTC time as ISO 8601 with millisecond precision.
std::string utc_timestamp();

}  // namespace classattn
