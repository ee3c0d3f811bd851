#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "classattn/gaze.hpp"

namespace classattn::detail {

inline double point_distance(const GazePoint& a, const GazePoint& b) noexcept {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// Bucket grid over the bounding box of a point set. Cells are square with
// side >= the requested size; per-axis cell count is capped at ~2*sqrt(N).
class UniformGrid {
public:
    UniformGrid(std::span<const GazePoint> points, double cell_size) : points_(points) {
        min_x_ = max_x_ = points.empty() ? 0.0 : points[0].x;
        min_y_ = max_y_ = points.empty() ? 0.0 : points[0].y;
        for (const auto& p : points) {
            min_x_ = std::min(min_x_, p.x);
            max_x_ = std::max(max_x_, p.x);
            min_y_ = std::min(min_y_, p.y);
            max_y_ = std::max(max_y_, p.y);
        }
        const double extent = std::max(max_x_ - min_x_, max_y_ - min_y_);
        const auto cap = static_cast<double>(
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2.0 * std::sqrt(static_cast<double>(points.size()))))));
        cell_ = std::max(cell_size, extent / cap);
        if (!(cell_ > 0.0)) {
            cell_ = 1.0;
        }
        nx_ = axis_cells(max_x_ - min_x_);
        ny_ = axis_cells(max_y_ - min_y_);

        std::vector<std::uint32_t> cell_of(points.size());
        start_.assign(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            cell_of[i] = static_cast<std::uint32_t>(cell_index(cx(points[i].x), cy(points[i].y)));
            ++start_[cell_of[i] + 1];
        }
        for (std::size_t c = 1; c < start_.size(); ++c) {
            start_[c] += start_[c - 1];
        }
        order_.resize(points.size());
        std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
        for (std::size_t i = 0; i < points.size(); ++i) {
            order_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
        }
    }

    double cell_size() const noexcept { return cell_; }

    // Calls fn(j) for every j with distance(i, j) <= eps, including i.
    template <class Fn>
    void for_each_within(std::size_t i, double eps, Fn&& fn) const {
        const GazePoint& p = points_[i];
        const int reach = static_cast<int>(std::ceil(eps / cell_));
        const int px = cx(p.x);
        const int py = cy(p.y);
        for (int y = std::max(0, py - reach); y <= std::min(ny_ - 1, py + reach); ++y) {
            for (int x = std::max(0, px - reach); x <= std::min(nx_ - 1, px + reach); ++x) {
                const auto c = cell_index(x, y);
                for (auto s = start_[c]; s < start_[c + 1]; ++s) {
                    const auto j = order_[s];
                    if (point_distance(p, points_[j]) <= eps) {
                        fn(static_cast<std::size_t>(j));
                    }
                }
            }
        }
    }

    // Distance from point i to its k-th nearest other point (k >= 1).
    double kth_neighbor_distance(std::size_t i, int k, std::vector<double>& heap) const {
        const GazePoint& p = points_[i];
        const int px = cx(p.x);
        const int py = cy(p.y);
        heap.clear();
        const auto ku = static_cast<std::size_t>(k);
        const int max_ring = std::max(nx_, ny_);
        auto consider = [&](int x, int y) {
            const auto c = cell_index(x, y);
            for (auto s = start_[c]; s < start_[c + 1]; ++s) {
                const auto j = order_[s];
                if (j == i) continue;
                const double dx = p.x - points_[j].x;
                const double dy = p.y - points_[j].y;
                const double d2 = dx * dx + dy * dy;
                if (heap.size() < ku) {
                    heap.push_back(d2);
                    std::push_heap(heap.begin(), heap.end());
                } else if (d2 < heap.front()) {
                    std::pop_heap(heap.begin(), heap.end());
                    heap.back() = d2;
                    std::push_heap(heap.begin(), heap.end());
                }
            }
        };
        for (int r = 0; r <= max_ring; ++r) {
            for (int y = py - r; y <= py + r; ++y) {
                if (y < 0 || y >= ny_) continue;
                const bool edge_row = (y == py - r || y == py + r);
                for (int x = px - r; x <= px + r; ++x) {
                    if (x < 0 || x >= nx_) continue;
                    if (!edge_row && x != px - r && x != px + r) continue;
                    consider(x, y);
                }
            }
            // Cells in ring r+1 are at least r*cell away from p.
            if (heap.size() == ku && std::sqrt(heap.front()) <= static_cast<double>(r) * cell_) {
                break;
            }
        }
        return std::sqrt(heap.front());
    }

private:
    int axis_cells(double extent) const noexcept {
        return std::max(1, static_cast<int>(std::floor(extent / cell_)) + 1);
    }
    int cx(double x) const noexcept { return std::min(nx_ - 1, static_cast<int>((x - min_x_) / cell_)); }
    int cy(double y) const noexcept { return std::min(ny_ - 1, static_cast<int>((y - min_y_) / cell_)); }
    std::size_t cell_index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(x);
    }

    std::span<const GazePoint> points_;
    double min_x_ = 0.0, max_x_ = 0.0, min_y_ = 0.0, max_y_ = 0.0;
    double cell_ = 1.0;
    int nx_ = 1;
    int ny_ = 1;
    std::vector<std::uint32_t> start_;
    std::vector<std::uint32_t> order_;
};

}  // namespace classattn::detail
