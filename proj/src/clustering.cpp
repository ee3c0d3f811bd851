#include "classattn/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "classattn/error.hpp"
#include "spatial_grid.hpp"

namespace classattn {

using detail::point_distance;
using detail::UniformGrid;

void ClusteringParams::validate() const {
    if (min_samples < 2) {
        throw ConfigError("min_samples", "must be at least 2");
    }
    if (const auto* fixed = std::get_if<FixedEps>(&eps_mode); fixed != nullptr) {
        if (!(fixed->value > 0.0) || !std::isfinite(fixed->value)) {
            throw ConfigError("eps", "fixed eps must be positive");
        }
    }
}

std::vector<double> kdistance_curve(std::span<const GazePoint> points, int k, std::size_t grid_threshold) {
    if (k < 1) {
        throw Error(ErrorCode::InsufficientPoints, "k-distance needs k >= 1");
    }
    if (points.size() <= static_cast<std::size_t>(k)) {
        throw Error(ErrorCode::InsufficientPoints,
                    "k-distance with k=" + std::to_string(k) + " needs more than " + std::to_string(k) +
                        " points, got " + std::to_string(points.size()));
    }
    const std::size_t n = points.size();
    std::vector<double> curve(n);
    if (n <= grid_threshold) {
        std::vector<double> d;
        d.reserve(n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            d.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) d.push_back(point_distance(points[i], points[j]));
            }
            auto kth = d.begin() + (k - 1);
            std::nth_element(d.begin(), kth, d.end());
            curve[i] = *kth;
        }
    } else {
        // Cells sized to hold about k/2 points on average.
        double extent = 0.0;
        {
            const auto [mnx, mxx] = std::minmax_element(points.begin(), points.end(),
                                                        [](const auto& a, const auto& b) { return a.x < b.x; });
            const auto [mny, mxy] = std::minmax_element(points.begin(), points.end(),
                                                        [](const auto& a, const auto& b) { return a.y < b.y; });
            extent = std::max(mxx->x - mnx->x, mxy->y - mny->y);
        }
        const double cell = extent * std::sqrt(static_cast<double>(k) / (2.0 * static_cast<double>(n)));
        const UniformGrid grid(points, cell);
        std::vector<double> heap;
        heap.reserve(static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < n; ++i) {
            curve[i] = grid.kth_neighbor_distance(i, k, heap);
        }
    }
    std::sort(curve.begin(), curve.end());
    return curve;
}

std::optional<Elbow> find_elbow(std::span<const double> curve) {
    if (curve.size() < 3) {
        throw Error(ErrorCode::InsufficientPoints, "elbow detection needs at least 3 samples");
    }
    const double lo = curve.front();
    const double hi = curve.back();
    if (!(hi > lo)) {
        return std::nullopt;
    }
    const double span_x = static_cast<double>(curve.size() - 1);
    const double span_y = hi - lo;
    Elbow best{0, curve[0]};
    double best_gap = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const double gap = static_cast<double>(i) / span_x - (curve[i] - lo) / span_y;
        if (gap > best_gap) {
            best_gap = gap;
            best = {i, curve[i]};
        }
    }
    return best;
}

double fallback_eps(std::span<const double> sorted_curve) {
    if (sorted_curve.empty()) {
        return 1e-6;
    }
    const auto idx = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(sorted_curve.size()))) - 1;
    const double v = sorted_curve[std::min(idx, sorted_curve.size() - 1)];
    return v > 0.0 ? v : 1e-6;
}

namespace {

class NeighborIndex {
public:
    NeighborIndex(std::span<const GazePoint> points, double eps, std::size_t grid_threshold)
        : points_(points), eps_(eps) {
        if (points.size() > grid_threshold) {
            grid_.emplace(points, eps);
        }
    }

    template <class Fn>
    void for_each(std::size_t i, Fn&& fn) const {
        if (grid_) {
            grid_->for_each_within(i, eps_, fn);
            return;
        }
        for (std::size_t j = 0; j < points_.size(); ++j) {
            if (point_distance(points_[i], points_[j]) <= eps_) fn(j);
        }
    }

private:
    std::span<const GazePoint> points_;
    double eps_;
    std::optional<UniformGrid> grid_;
};

}  // namespace

ClusteringResult dbscan(std::span<const GazePoint> points, const ClusteringParams& params) {
    params.validate();
    const std::size_t n = points.size();
    if (n == 0) {
        throw Error(ErrorCode::EmptyInput, "dbscan on an empty gaze distribution");
    }

    ClusteringResult result;
    int min_samples = params.min_samples;
    if (params.auto_scale && n < 2 * static_cast<std::size_t>(params.min_samples)) {
        min_samples = std::max(5, static_cast<int>(n / 6));
        result.auto_scaled = true;
    }
    result.min_samples_used = min_samples;

    if (const auto* fixed = std::get_if<FixedEps>(&params.eps_mode); fixed != nullptr) {
        result.eps_used = fixed->value;
    } else {
        const int k = std::max(1, ClusteringParams::kdist_k(min_samples));
        result.kdist_curve = kdistance_curve(points, k, params.grid_threshold);
        std::optional<Elbow> elbow;
        if (result.kdist_curve.size() >= 3) {
            elbow = find_elbow(result.kdist_curve);
        }
        if (elbow && elbow->value > 0.0) {
            result.eps_used = elbow->value;
        } else {
            result.eps_used = fallback_eps(result.kdist_curve);
            result.eps_fallback = true;
        }
    }

    const NeighborIndex index(points, result.eps_used, params.grid_threshold);
    const auto need = static_cast<std::size_t>(min_samples);
    std::vector<char> core(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t count = 0;
        index.for_each(i, [&](std::size_t) { ++count; });
        core[i] = count >= need ? 1 : 0;
    }

    // Core points form clusters by connectivity; ids follow the lowest core index.
    result.labels.assign(n, kNoise);
    int next_id = 0;
    std::deque<std::size_t> frontier;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || result.labels[i] != kNoise) continue;
        const int id = next_id++;
        result.labels[i] = id;
        frontier.push_back(i);
        while (!frontier.empty()) {
            const std::size_t q = frontier.front();
            frontier.pop_front();
            index.for_each(q, [&](std::size_t j) {
                if (core[j] && result.labels[j] == kNoise) {
                    result.labels[j] = id;
                    frontier.push_back(j);
                }
            });
        }
    }

    // Border points join the cluster of the lowest-index core within eps.
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        std::size_t best = n;
        index.for_each(i, [&](std::size_t j) {
            if (core[j] && j < best) best = j;
        });
        if (best < n) {
            result.labels[i] = result.labels[best];
        }
    }

    std::vector<std::size_t> sizes(static_cast<std::size_t>(next_id), 0);
    for (const int label : result.labels) {
        if (label == kNoise) {
            ++result.noise_count;
        } else {
            ++sizes[static_cast<std::size_t>(label)];
        }
    }
    std::sort(sizes.begin(), sizes.end(), std::greater<>());
    result.cluster_sizes = std::move(sizes);
    return result;
}

ClusteringResult dbscan(const GazeDistribution& d, const ClusteringParams& params) {
    return dbscan(std::span{d.points}, params);
}

}  // namespace classattn
