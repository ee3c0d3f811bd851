/**
 * clustering.hpp — DBSCAN with eps tuned from the k-distance curve.
 *
 * Conventions shared with the reference clusterer in the tests:
 *   - distance is sqrt(dx*dx + dy*dy), neighbors satisfy dist <= eps;
 *   - a point's neighbor count includes itself;
 *   - a border point reachable from several clusters joins the cluster of
 *     the lowest-index core point within eps;
 *   - cluster ids follow the lowest core index of each cluster.
 */

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "classattn/gaze.hpp"

namespace classattn {

inline constexpr int kNoise = -1;

struct DynamicEps {};
struct FixedEps {
    double value = 0.0;
};
using EpsMode = std::variant<DynamicEps, FixedEps>;

struct ClusteringParams {
    int min_samples = 100;
    EpsMode eps_mode = DynamicEps{};
    // When N < 2 * min_samples, use max(5, N / 6) instead.
    bool auto_scale = true;
    // Switch from pairwise scans to a uniform grid above this many points.
    std::size_t grid_threshold = 2000;

    void validate() const;
    static int kdist_k(int min_samples) noexcept { return min_samples / 3; }
};

struct ClusteringResult {
    std::vector<int> labels;
    std::vector<std::size_t> cluster_sizes;  // descending
    std::size_t noise_count = 0;
    double eps_used = 0.0;
    int min_samples_used = 0;
    bool auto_scaled = false;
    bool eps_fallback = false;
    std::vector<double> kdist_curve;  // empty for fixed eps

    std::size_t n_clusters() const noexcept { return cluster_sizes.size(); }
    std::size_t largest_cluster() const noexcept { return cluster_sizes.empty() ? 0 : cluster_sizes.front(); }
};

/// Distance from every point to its k-th nearest other point, sorted
/// ascending. Throws Error(InsufficientPoints) unless N > k.
std::vector<double> kdistance_curve(std::span<const GazePoint> points, int k,
                                    std::size_t grid_threshold = 2000);

struct Elbow {
    std::size_t index = 0;
    double value = 0.0;
};

/// Knee of a convex increasing curve: normalize index and value to [0, 1]
/// and take the first index maximizing x_n - y_n. nullopt when the curve is
/// constant. Throws Error(InsufficientPoints) for fewer than 3 samples.
std::optional<Elbow> find_elbow(std::span<const double> curve);

// Fallback eps when the elbow is degenerate: 90th percentile of the curve,
// or 1e-6 if that is zero.
double fallback_eps(std::span<const double> sorted_curve);

ClusteringResult dbscan(std::span<const GazePoint> points, const ClusteringParams& params);
ClusteringResult dbscan(const GazeDistribution& d, const ClusteringParams& params);

}  // namespace classattn
