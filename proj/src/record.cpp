#include "classattn/record.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <istream>
#include <limits>
#include <ostream>

#include "classattn/error.hpp"

namespace classattn {

using nlohmann::json;

RecordWriter::RecordWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto file = std::make_unique<std::ofstream>(path, std::ios::out | std::ios::trunc);
    if (!*file) {
        throw Error(ErrorCode::Validation, "cannot open record file " + path.string());
    }
    out_ = std::move(file);
}

RecordWriter::RecordWriter(std::unique_ptr<std::ostream> out) : out_(std::move(out)) {}

void RecordWriter::write(const json& line) {
    const std::string text = line.dump();
    std::lock_guard lock(mu_);
    *out_ << text << '\n';
    out_->flush();
}

json header_json(const std::string& session, const std::string& created_at, std::uint64_t seed,
                 const SessionConfig& config) {
    return json{{"type", "header"},     {"version", kRecordVersion}, {"session", session},
                {"created_at", created_at}, {"seed", seed},              {"config", to_json(config)}};
}

json batch_json(double t_ms, std::size_t accepted, std::size_t dropped, const std::vector<RawSample>& samples) {
    return json{{"type", "batch"},
                {"t_ms", t_ms},
                {"accepted", accepted},
                {"dropped", dropped},
                {"samples", samples_to_json(samples)}};
}

json reference_json(const GazeDistribution& reference) {
    json pts = json::array();
    for (const auto& p : reference.points) {
        pts.push_back(json::array({p.x, p.y}));
    }
    return json{{"type", "reference"}, {"points", std::move(pts)}};
}

json to_json(const CloseInfo& c) {
    return json{{"type", "close"},
                {"reason", c.reason},
                {"end_ms", c.end_ms},
                {"windows", c.windows},
                {"accepted", c.accepted},
                {"dropped", c.dropped},
                {"dropped_late", c.dropped_late},
                {"skipped_windows", c.skipped_windows}};
}

namespace {

void read_line(Record& r, const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "header") {
        r.session = j.at("session").get<std::string>();
        r.seed = j.value("seed", std::uint64_t{0});
        r.config = session_config_from_json(j.at("config"), SessionConfig{}, "config");
        r.has_header = true;
    } else if (type == "batch") {
        RecordBatch b;
        b.t_ms = j.at("t_ms").get<double>();
        b.accepted = j.value("accepted", std::size_t{0});
        b.dropped = j.value("dropped", std::size_t{0});
        b.samples = samples_from_json(j.at("samples"));
        r.batches.push_back(std::move(b));
    } else if (type == "window") {
        r.windows.push_back(window_event_from_json(j));
    } else if (type == "reference") {
        GazeDistribution d;
        for (const auto& p : j.at("points")) {
            d.points.push_back({{}, 0.0, p.at(0).get<double>(), p.at(1).get<double>()});
        }
        r.reference = std::move(d);
    } else if (type == "close") {
        CloseInfo c;
        c.reason = j.value("reason", std::string{});
        c.end_ms = j.at("end_ms").get<std::int64_t>();
        c.windows = j.value("windows", std::uint64_t{0});
        c.accepted = j.value("accepted", std::uint64_t{0});
        c.dropped = j.value("dropped", std::uint64_t{0});
        c.dropped_late = j.value("dropped_late", std::uint64_t{0});
        c.skipped_windows = j.value("skipped_windows", std::uint64_t{0});
        r.close = c;
    } else if (type == "threshold") {
        r.threshold_changes.emplace_back(r.windows.size(), j.at("threshold").get<double>());
    } else {
        throw Error(ErrorCode::Parse, "unknown record type '" + type + "'");
    }
}

}  // namespace

Record parse_record(std::istream& in) {
    Record r;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            read_line(r, j);
        } catch (const std::exception& e) {
            ++r.corrupt_lines;
            r.warnings.push_back("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return r;
}

Record read_record(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::NotFound, "cannot open record " + path.string());
    }
    return parse_record(in);
}

std::vector<GazePoint> admitted_points(const Record& r) {
    std::vector<GazePoint> out;
    const bool client = r.config.timestamp_source == TimestampSource::Client;
    const double end = r.close ? static_cast<double>(r.close->end_ms) : std::numeric_limits<double>::infinity();
    for (const auto& b : r.batches) {
        if (!client && b.t_ms >= end) continue;
        for (const auto& s : b.samples) {
            const double t = client ? s.t_ms : b.t_ms;
            if (!std::isfinite(t) || t < 0.0 || t >= end) continue;
            const AdmittedCoord a = admit(s.x, s.y);
            if (!a.admitted()) continue;
            out.push_back({{}, t, a.x, a.y});
        }
    }
    return out;
}

std::string utc_timestamp() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const std::time_t secs = system_clock::to_time_t(now);
    const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

}  // namespace classattn
