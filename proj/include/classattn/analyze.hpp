/**
 * analyze.hpp — offline analyses and replay of session records.
 *
 * Every analysis is a pure function of the record (and its options): the
 * same record yields byte-identical files. Doubles are written in shortest
 * round-trip form.
 *
 * Only windows that closed before the record's close time are analyzed;
 * "pooled" means every admitted point up to that time.
 *
 *   cohesiveness   cohesiveness.csv
 *                  scope,start_ms,end_ms,n_points,cohesiveness,centroid_x,centroid_y
 *                  (first row is the pooled distribution)
 *   randomization  randomization.json      pooled distribution vs uniform
 *                  null_diffs.csv          trial,diff (signed)
 *                  null_histogram.csv      bin_lo,bin_hi,count of |diff|
 *   dbscan         dbscan_pooled.json      clusters of the pooled distribution
 *                  dbscan_labels.csv       x,y,label of the pooled points
 *                  kdist_curve.csv         rank,kdist of the pooled points
 *                  dbscan_windows.csv      per-window cluster summary
 *   heatmap        heatmap_pooled.csv      row,col,count
 *                  heatmaps.json           per-window grids
 *   score-series   scores.csv              per-window score and alert
 *
 * The randomization test uses the record's reference sample when present,
 * otherwise the seeded reference of the configuration.
 */

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "classattn/record.hpp"
#include "classattn/stats.hpp"

namespace classattn {

enum class Analysis { Cohesiveness, Randomization, Dbscan, Heatmap, ScoreSeries };

const char* analysis_name(Analysis a) noexcept;
// Accepts the names above plus "randomization-test"; throws ConfigError.
Analysis parse_analysis(const std::string& name);
std::vector<Analysis> all_analyses();

struct AnalyzeOptions {
    std::vector<Analysis> analyses = all_analyses();
    // Overrides of the record's randomization settings.
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    int histogram_bins = 50;
};

struct AnalyzeReport {
    std::vector<std::filesystem::path> files;
    std::size_t corrupt_lines = 0;
    std::vector<std::string> warnings;
    nlohmann::json summary;
};

// Shortest round-trip decimal form of v.
std::string format_double(double v);

// Closed windows of the recorded session, rebuilt from its batches.
std::vector<GazeDistribution> record_windows(const Record& r);
GazeDistribution pooled_distribution(const Record& r);

AnalyzeReport analyze_record(const Record& r, const std::filesystem::path& out_dir, const AnalyzeOptions& options = {});

struct ReplayResult {
    std::vector<WindowEvent> recorded;
    std::vector<WindowEvent> replayed;
    std::size_t mismatches = 0;
    // Replayed windows absent from the record, and how many the live
    // session reported skipping.
    std::size_t extra_windows = 0;
    std::size_t expected_extra = 0;
    std::vector<std::string> differences;

    bool ok() const noexcept { return mismatches == 0 && extra_windows == expected_extra; }
};

// Re-runs the recorded batches through a fresh synchronous session with the
// recorded configuration and compares the window events it publishes with
// the recorded ones. Optionally writes the replay's own record.
ReplayResult replay_record(const Record& r, const std::optional<std::filesystem::path>& out_record = std::nullopt);

}  // namespace classattn
