#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "classattn/clustering.hpp"
#include "classattn/gaze.hpp"
#include "classattn/stats.hpp"

namespace classattn {

enum class ScoreStrategy { Density, Statistical };

const char* strategy_name(ScoreStrategy s) noexcept;
std::optional<ScoreStrategy> parse_strategy(std::string_view name) noexcept;

struct AttentionScore {
    double value = 0.0;
    std::int64_t window_start = 0;
    std::int64_t window_end = 0;
    std::size_t n_points = 0;
    std::size_t n_clusters = 0;
    double clustered_fraction = 0.0;
    double concentration = 0.0;
    ScoreStrategy strategy = ScoreStrategy::Density;
    bool auto_scaled = false;
    // Set when scoring failed and value was forced to 0.
    bool error = false;
};

/// Density score: clustered_fraction * concentration, where
///   clustered_fraction = (n_points - noise) / n_points   (0 for no points)
///   concentration      = largest cluster / clustered points (0 for no clusters)
AttentionScore score_window(const ClusteringResult& c, std::size_t n_points);

// Clusters the window and scores it. Clustering failures yield value 0 with
// error set; an empty window yields value 0 without error.
AttentionScore score_distribution(const GazeDistribution& d, const ClusteringParams& params);

inline constexpr double kDefaultZSaturation = 50.0;

/// value = clamp(z / z_ref, 0, 1) from the randomization test.
AttentionScore score_window_statistical(const GazeDistribution& d, const RandomizationConfig& cfg,
                                        double z_ref = kDefaultZSaturation);
AttentionScore score_window_statistical(const GazeDistribution& d, const RandomizationConfig& cfg,
                                        const NullDistribution& null, double z_ref = kDefaultZSaturation);

struct AlertPolicy {
    double threshold = 0.5;
    int consecutive_windows = 3;
    int cooloff_windows = 5;

    void validate() const;
};

struct AlertEvent {
    std::uint64_t window_index = 0;
    std::int64_t window_start = 0;
    std::int64_t window_end = 0;
    double score = 0.0;
};

/**
 * Debounced threshold alerting over a stream of window scores.
 *
 * An alert fires when `consecutive_windows` successive scores are strictly
 * below the threshold. It then disarms until a score at or above the
 * threshold is seen, and no alert fires within `cooloff_windows` windows of
 * the previous one. Windows without points carry no signal and are skipped.
 */
class AlertEvaluator {
public:
    explicit AlertEvaluator(AlertPolicy policy = {});

    std::optional<AlertEvent> observe(const AttentionScore& score);

    // Applies to subsequent windows. Throws ConfigError if invalid.
    void set_policy(const AlertPolicy& policy);
    const AlertPolicy& policy() const noexcept { return policy_; }

private:
    AlertPolicy policy_;
    std::uint64_t index_ = 0;
    int run_ = 0;
    bool armed_ = true;
    std::optional<std::uint64_t> last_alert_;
};

std::vector<AlertEvent> evaluate_alert(std::span<const AttentionScore> scores, const AlertPolicy& policy);

}  // namespace classattn
