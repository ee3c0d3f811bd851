#include "classattn/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "classattn/error.hpp"

namespace classattn {

const char* strategy_name(ScoreStrategy s) noexcept {
    return s == ScoreStrategy::Density ? "density" : "statistical";
}

std::optional<ScoreStrategy> parse_strategy(std::string_view name) noexcept {
    if (name == "density") return ScoreStrategy::Density;
    if (name == "statistical") return ScoreStrategy::Statistical;
    return std::nullopt;
}

AttentionScore score_window(const ClusteringResult& c, std::size_t n_points) {
    AttentionScore s;
    s.strategy = ScoreStrategy::Density;
    s.n_points = n_points;
    s.n_clusters = c.n_clusters();
    s.auto_scaled = c.auto_scaled;
    if (n_points == 0) {
        return s;
    }
    const std::size_t clustered = n_points - std::min(c.noise_count, n_points);
    s.clustered_fraction = static_cast<double>(clustered) / static_cast<double>(n_points);
    s.concentration = clustered == 0 ? 0.0 : static_cast<double>(c.largest_cluster()) / static_cast<double>(clustered);
    s.value = std::clamp(s.clustered_fraction * s.concentration, 0.0, 1.0);
    return s;
}

AttentionScore score_distribution(const GazeDistribution& d, const ClusteringParams& params) {
    AttentionScore s;
    if (!d.empty()) {
        try {
            s = score_window(dbscan(d, params), d.size());
        } catch (const Error&) {
            s = AttentionScore{};
            s.n_points = d.size();
            s.error = true;
        }
    }
    s.window_start = d.window_start;
    s.window_end = d.window_end;
    return s;
}

AttentionScore score_window_statistical(const GazeDistribution& d, const RandomizationConfig& cfg,
                                        const NullDistribution& null, double z_ref) {
    const RandomizationResult r = randomization_test(d, cfg, null);
    AttentionScore s;
    s.strategy = ScoreStrategy::Statistical;
    s.window_start = d.window_start;
    s.window_end = d.window_end;
    s.n_points = d.size();
    s.value = std::clamp(r.z / z_ref, 0.0, 1.0);
    return s;
}

AttentionScore score_window_statistical(const GazeDistribution& d, const RandomizationConfig& cfg, double z_ref) {
    if (d.empty()) {
        throw Error(ErrorCode::EmptyInput, "statistical score of an empty gaze distribution");
    }
    return score_window_statistical(d, cfg, summarize_null(null_distribution(cfg)), z_ref);
}

void AlertPolicy::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("threshold", "must lie strictly between 0 and 1");
    }
    if (consecutive_windows < 1) {
        throw ConfigError("consecutive_windows", "must be positive");
    }
    if (cooloff_windows < 1) {
        throw ConfigError("cooloff_windows", "must be positive");
    }
}

AlertEvaluator::AlertEvaluator(AlertPolicy policy) : policy_(policy) { policy_.validate(); }

void AlertEvaluator::set_policy(const AlertPolicy& policy) {
    policy.validate();
    policy_ = policy;
}

std::optional<AlertEvent> AlertEvaluator::observe(const AttentionScore& score) {
    if (score.n_points == 0) {
        return std::nullopt;
    }
    const std::uint64_t idx = index_++;
    if (score.value < policy_.threshold) {
        ++run_;
    } else {
        run_ = 0;
        armed_ = true;
    }
    const bool cooled = !last_alert_ || idx - *last_alert_ > static_cast<std::uint64_t>(policy_.cooloff_windows);
    if (armed_ && run_ >= policy_.consecutive_windows && cooled) {
        armed_ = false;
        last_alert_ = idx;
        return AlertEvent{idx, score.window_start, score.window_end, score.value};
    }
    return std::nullopt;
}

std::vector<AlertEvent> evaluate_alert(std::span<const AttentionScore> scores, const AlertPolicy& policy) {
    AlertEvaluator eval(policy);
    std::vector<AlertEvent> events;
    for (const auto& s : scores) {
        if (auto e = eval.observe(s)) events.push_back(*e);
    }
    return events;
}

}  // namespace classattn
