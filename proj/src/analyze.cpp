#include "classattn/analyze.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "classattn/clustering.hpp"
#include "classattn/error.hpp"
#include "classattn/heatmap.hpp"
#include "classattn/scoring.hpp"
#include "classattn/session.hpp"

namespace classattn {

using nlohmann::json;

const char* analysis_name(Analysis a) noexcept {
    switch (a) {
        case Analysis::Cohesiveness: return "cohesiveness";
        case Analysis::Randomization: return "randomization";
        case Analysis::Dbscan: return "dbscan";
        case Analysis::Heatmap: return "heatmap";
        case Analysis::ScoreSeries: return "score-series";
    }
    return "cohesiveness";
}

Analysis parse_analysis(const std::string& name) {
    for (Analysis a : all_analyses()) {
        if (name == analysis_name(a)) return a;
    }
    if (name == "randomization-test") return Analysis::Randomization;
    throw ConfigError("analysis", "unknown analysis '" + name + "'");
}

std::vector<Analysis> all_analyses() {
    return {Analysis::Cohesiveness, Analysis::Randomization, Analysis::Dbscan, Analysis::Heatmap, Analysis::ScoreSeries};
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

namespace {

double record_end(const Record& r, const std::vector<GazePoint>& pts) {
    if (r.close) return static_cast<double>(r.close->end_ms);
    double hi = 0.0;
    for (const auto& p : pts) hi = std::max(hi, p.t_ms);
    return hi;
}

class Csv {
public:
    explicit Csv(std::string header) { out_ << header << '\n'; }

    template <typename... Fields>
    void row(const Fields&... fields) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(fields), first = false), ...);
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

private:
    static std::string cell(double v) { return format_double(v); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(bool b) { return b ? "true" : "false"; }
    template <typename T>
        requires std::is_integral_v<T>
    static std::string cell(T v) {
        return std::to_string(v);
    }

    std::ostringstream out_;
};

class Writer {
public:
    Writer(std::filesystem::path dir, AnalyzeReport& report) : dir_(std::move(dir)), report_(report) {
        std::filesystem::create_directories(dir_);
    }

    void file(const std::string& name, const std::string& content) {
        const auto path = dir_ / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Validation, "cannot write " + path.string());
        out << content;
        report_.files.push_back(path);
    }

    void json_file(const std::string& name, const json& j) { file(name, j.dump(2) + "\n"); }

private:
    std::filesystem::path dir_;
    AnalyzeReport& report_;
};

std::string sizes_cell(const std::vector<std::size_t>& sizes) {
    std::string s;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) s += ';';
        s += std::to_string(sizes[i]);
    }
    return s;
}

json clustering_json(const ClusteringResult& c, std::size_t n) {
    return json{{"n_points", n},
                {"n_clusters", c.n_clusters()},
                {"cluster_sizes", c.cluster_sizes},
                {"noise", c.noise_count},
                {"eps_used", c.eps_used},
                {"min_samples_used", c.min_samples_used},
                {"auto_scaled", c.auto_scaled},
                {"eps_fallback", c.eps_fallback}};
}

void cohesiveness_analysis(Writer& w, const GazeDistribution& pooled, const std::vector<GazeDistribution>& windows,
                           json& summary) {
    Csv csv("scope,start_ms,end_ms,n_points,cohesiveness,centroid_x,centroid_y");
    const auto emit = [&csv](const std::string& scope, const GazeDistribution& d) {
        if (d.empty()) {
            csv.row(scope, d.window_start, d.window_end, d.size(), "", "", "");
            return;
        }
        const Centroid c = centroid(d);
        csv.row(scope, d.window_start, d.window_end, d.size(), cohesiveness(d), c.x, c.y);
    };
    emit("pooled", pooled);
    for (const auto& d : windows) emit("window", d);
    w.file("cohesiveness.csv", csv.str());
    summary["pooled_cohesiveness"] = pooled.empty() ? json(nullptr) : json(cohesiveness(pooled));
}

void randomization_analysis(Writer& w, const Record& r, const GazeDistribution& pooled, const AnalyzeOptions& o,
                            json& summary, AnalyzeReport& report) {
    if (pooled.empty()) {
        report.warnings.push_back("randomization: no admitted points");
        return;
    }
    RandomizationConfig cfg = r.config.randomization;
    if (o.trials) cfg.trials = *o.trials;
    if (o.seed) cfg.seed = *o.seed;
    const NullDistribution null = summarize_null(null_distribution(cfg));
    const RandomizationResult res = randomization_test(pooled, cfg, null, r.reference);

    w.json_file("randomization.json", json{{"reference", r.reference ? "recorded" : "seeded"},
                                           {"n_points", pooled.size()},
                                           {"trials", cfg.trials},
                                           {"sample_size", cfg.sample_size},
                                           {"seed", cfg.seed},
                                           {"alpha", cfg.alpha},
                                           {"reference_cohesiveness", res.reference_cohesiveness},
                                           {"focus_cohesiveness", res.focus_cohesiveness},
                                           {"random_focus_diff", res.random_focus_diff},
                                           {"null_mean", res.null_mean},
                                           {"null_std", res.null_std},
                                           {"z", res.z},
                                           {"p", res.p},
                                           {"empirical_tail", res.empirical_tail},
                                           {"reject_null", res.reject_null},
                                           {"low_trials_warning", res.low_trials_warning}});

    Csv diffs("trial,diff");
    for (std::size_t i = 0; i < null.diffs.size(); ++i) diffs.row(i, null.diffs[i]);
    w.file("null_diffs.csv", diffs.str());

    double hi = 0.0;
    for (double d : null.diffs) hi = std::max(hi, std::abs(d));
    const int bins = std::max(1, o.histogram_bins);
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    const double width = hi > 0.0 ? hi / bins : 1.0;
    for (double d : null.diffs) {
        const auto b = std::min(bins - 1, static_cast<int>(std::abs(d) / width));
        ++counts[static_cast<std::size_t>(b)];
    }
    Csv hist("bin_lo,bin_hi,count");
    for (int b = 0; b < bins; ++b) hist.row(b * width, (b + 1) * width, counts[static_cast<std::size_t>(b)]);
    w.file("null_histogram.csv", hist.str());

    summary["random_focus_diff"] = res.random_focus_diff;
    summary["z"] = res.z;
    summary["p"] = res.p;
    summary["reject_null"] = res.reject_null;
}

void dbscan_analysis(Writer& w, const Record& r, const GazeDistribution& pooled,
                     const std::vector<GazeDistribution>& windows, json& summary, AnalyzeReport& report) {
    const ClusteringParams& params = r.config.clustering;
    if (!pooled.empty()) {
        try {
            const ClusteringResult c = dbscan(pooled, params);
            w.json_file("dbscan_pooled.json", clustering_json(c, pooled.size()));
            Csv labels("x,y,label");
            for (std::size_t i = 0; i < pooled.size(); ++i) labels.row(pooled.points[i].x, pooled.points[i].y, c.labels[i]);
            w.file("dbscan_labels.csv", labels.str());
            Csv kd("rank,kdist");
            for (std::size_t i = 0; i < c.kdist_curve.size(); ++i) kd.row(i, c.kdist_curve[i]);
            w.file("kdist_curve.csv", kd.str());
            summary["pooled_clusters"] = c.n_clusters();
        } catch (const Error& e) {
            report.warnings.push_back(std::string("dbscan pooled: ") + e.what());
        }
    }
    Csv csv("start_ms,end_ms,n_points,n_clusters,noise,eps_used,min_samples_used,auto_scaled,eps_fallback,cluster_sizes");
    for (const auto& d : windows) {
        if (d.empty()) {
            csv.row(d.window_start, d.window_end, 0, 0, 0, "", "", "", "", "");
            continue;
        }
        try {
            const ClusteringResult c = dbscan(d, params);
            csv.row(d.window_start, d.window_end, d.size(), c.n_clusters(), c.noise_count, c.eps_used,
                    c.min_samples_used, c.auto_scaled, c.eps_fallback, sizes_cell(c.cluster_sizes));
        } catch (const Error& e) {
            csv.row(d.window_start, d.window_end, d.size(), 0, d.size(), "", "", "", "", "");
            report.warnings.push_back("dbscan window " + std::to_string(d.window_start) + ": " + e.what());
        }
    }
    w.file("dbscan_windows.csv", csv.str());
}

void heatmap_analysis(Writer& w, const Record& r, const GazeDistribution& pooled,
                      const std::vector<GazeDistribution>& windows) {
    const int rows = r.config.heatmap_rows;
    const int cols = r.config.heatmap_cols;
    const HeatmapGrid g = HeatmapGrid::bin(pooled, rows, cols);
    Csv csv("row,col,count");
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) csv.row(i, j, g.at(i, j));
    }
    w.file("heatmap_pooled.csv", csv.str());
    json arr = json::array();
    for (const auto& d : windows) {
        const HeatmapGrid h = HeatmapGrid::bin(d, rows, cols);
        arr.push_back({{"start_ms", d.window_start}, {"end_ms", d.window_end}, {"rows", rows}, {"cols", cols},
                       {"counts", h.counts}});
    }
    w.file("heatmaps.json", arr.dump() + "\n");
}

void score_analysis(Writer& w, const Record& r, const std::vector<GazeDistribution>& windows, json& summary) {
    Csv csv("index,start_ms,end_ms,score,n_points,n_clusters,clustered_fraction,concentration,alert,threshold,error,source");
    std::size_t alerts = 0;
    if (!r.windows.empty()) {
        for (const auto& e : r.windows) {
            if (r.close && e.score.window_end > r.close->end_ms) continue;
            csv.row(e.index, e.score.window_start, e.score.window_end, e.score.value, e.score.n_points,
                    e.score.n_clusters, e.score.clustered_fraction, e.score.concentration, e.alert, e.threshold,
                    e.score.error, "recorded");
            alerts += e.alert;
        }
    } else {
        AlertEvaluator eval(r.config.alert);
        for (const auto& d : windows) {
            const AttentionScore s = score_distribution(d, r.config.clustering);
            const bool alert = eval.observe(s).has_value();
            csv.row(static_cast<std::uint64_t>(d.window_start / r.config.window.stride_ms), s.window_start,
                    s.window_end, s.value, s.n_points, s.n_clusters, s.clustered_fraction, s.concentration, alert,
                    eval.policy().threshold, s.error, "recomputed");
            alerts += alert;
        }
    }
    w.file("scores.csv", csv.str());
    summary["alerts"] = alerts;
}

}  // namespace

std::vector<GazeDistribution> record_windows(const Record& r) {
    const auto pts = admitted_points(r);
    const double end = record_end(r, pts);
    const std::int64_t len = r.config.window.window_len_ms;
    const std::int64_t stride = r.config.window.stride_ms;
    std::vector<GazeDistribution> out;
    for (std::int64_t k = 0; static_cast<double>(k * stride + len) <= end; ++k) {
        GazeDistribution d;
        d.window_start = k * stride;
        d.window_end = k * stride + len;
        out.push_back(std::move(d));
    }
    for (const auto& p : pts) {
        // Windows k with k*stride <= t < k*stride + len.
        const auto t = static_cast<std::int64_t>(std::floor(p.t_ms));
        const std::int64_t hi = t / stride;
        const std::int64_t lo = std::max<std::int64_t>(0, (t - len) / stride + ((t - len) >= 0 ? 1 : 0));
        for (std::int64_t k = lo; k <= hi && k < static_cast<std::int64_t>(out.size()); ++k) {
            auto& d = out[static_cast<std::size_t>(k)];
            if (p.t_ms >= static_cast<double>(d.window_start) && p.t_ms < static_cast<double>(d.window_end)) {
                d.points.push_back(p);
            }
        }
    }
    return out;
}

GazeDistribution pooled_distribution(const Record& r) {
    GazeDistribution d;
    d.points = admitted_points(r);
    d.window_start = 0;
    d.window_end = static_cast<std::int64_t>(std::ceil(record_end(r, d.points)));
    return d;
}

AnalyzeReport analyze_record(const Record& r, const std::filesystem::path& out_dir, const AnalyzeOptions& options) {
    AnalyzeReport report;
    report.corrupt_lines = r.corrupt_lines;
    report.warnings = r.warnings;
    if (!r.has_header) report.warnings.push_back("record has no header; default configuration assumed");

    const GazeDistribution pooled = pooled_distribution(r);
    const std::vector<GazeDistribution> windows = record_windows(r);
    Writer w(out_dir, report);
    json summary{{"session", r.session},
                 {"points", pooled.size()},
                 {"windows", windows.size()},
                 {"corrupt_lines", r.corrupt_lines}};

    for (Analysis a : options.analyses) {
        switch (a) {
            case Analysis::Cohesiveness: cohesiveness_analysis(w, pooled, windows, summary); break;
            case Analysis::Randomization: randomization_analysis(w, r, pooled, options, summary, report); break;
            case Analysis::Dbscan: dbscan_analysis(w, r, pooled, windows, summary, report); break;
            case Analysis::Heatmap: heatmap_analysis(w, r, pooled, windows); break;
            case Analysis::ScoreSeries: score_analysis(w, r, windows, summary); break;
        }
    }
    summary["warnings"] = report.warnings;
    json files = json::array();
    for (const auto& f : report.files) files.push_back(f.filename().string());
    summary["files"] = files;
    report.summary = summary;
    w.json_file("analysis_summary.json", summary);
    return report;
}

ReplayResult replay_record(const Record& r, const std::optional<std::filesystem::path>& out_record) {
    ReplayResult result;
    result.recorded = r.windows;

    ManualClock clock;
    Session::Options opts;
    opts.clock = clock.clock();
    opts.seed = r.seed;
    if (out_record) opts.record = std::make_shared<RecordWriter>(*out_record);
    Session session(r.session, r.config, std::move(opts));
    // Recorded batches carry no student identity; one replay token suffices.
    const std::string token = session.join();

    const bool client = r.config.timestamp_source == TimestampSource::Client;
    const std::int64_t len = r.config.window.window_len_ms;
    const std::int64_t stride = r.config.window.stride_ms;
    std::size_t next_change = 0;
    const auto apply_changes = [&] {
        const std::size_t published = session.history().size();
        while (next_change < r.threshold_changes.size() && r.threshold_changes[next_change].first <= published) {
            session.set_threshold(r.threshold_changes[next_change].second);
            ++next_change;
        }
    };
    // Close windows one at a time so threshold changes land between the
    // same windows as in the live session.
    const auto advance = [&](double t) {
        if (client) return;
        for (;;) {
            const auto next_end = static_cast<double>(static_cast<std::int64_t>(session.history().size()) * stride + len);
            if (next_end > t) break;
            clock.set(next_end);
            apply_changes();
            session.tick();
        }
        clock.set(t);
        apply_changes();
    };

    for (const auto& b : r.batches) {
        if (r.close && b.t_ms >= static_cast<double>(r.close->end_ms) && !client) break;
        advance(b.t_ms);
        session.ingest(token, b.samples);
        if (client) {
            apply_changes();
            session.tick();
        }
    }
    if (r.close) {
        advance(static_cast<double>(r.close->end_ms));
        apply_changes();
        session.close(static_cast<double>(r.close->end_ms), r.close->reason);
    } else {
        session.close(client ? std::nullopt : std::optional<double>(clock.now()), "replay");
    }
    result.replayed = session.history();

    std::map<std::uint64_t, const WindowEvent*> replayed;
    for (const auto& e : result.replayed) replayed.emplace(e.index, &e);
    for (const auto& e : result.recorded) {
        const auto it = replayed.find(e.index);
        const json a = to_json(e);
        if (it == replayed.end()) {
            ++result.mismatches;
            result.differences.push_back("window " + std::to_string(e.score.window_start) + ": not replayed");
            continue;
        }
        const json b = to_json(*it->second);
        replayed.erase(it);
        if (a != b) {
            ++result.mismatches;
            if (result.differences.size() < 20) {
                result.differences.push_back("window " + std::to_string(e.score.window_start) + ": recorded " +
                                             a.dump().substr(0, 160) + "... replayed " + b.dump().substr(0, 160) +
                                             "...");
            }
        }
    }
    // Windows the live session skipped under backpressure are expected extras.
    result.extra_windows = replayed.size();
    result.expected_extra = r.close ? r.close->skipped_windows : 0;
    return result;
}

}  // namespace classattn
