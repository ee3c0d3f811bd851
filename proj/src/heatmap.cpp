#include "classattn/heatmap.hpp"

#include <algorithm>
#include <numeric>

#include "classattn/error.hpp"

namespace classattn {

std::uint64_t HeatmapGrid::total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

HeatmapGrid HeatmapGrid::bin(const GazeDistribution& d, int rows, int cols) {
    if (rows < 1 || cols < 1) {
        throw ConfigError("heatmap", "rows and cols must be positive");
    }
    HeatmapGrid g;
    g.rows = rows;
    g.cols = cols;
    g.window_start = d.window_start;
    g.window_end = d.window_end;
    g.counts.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0);
    for (const auto& p : d.points) {
        // Admitted points are in [0, 1]; x == 1 belongs to the last column.
        const int c = std::clamp(static_cast<int>(p.x * cols), 0, cols - 1);
        const int r = std::clamp(static_cast<int>(p.y * rows), 0, rows - 1);
        ++g.counts[static_cast<std::size_t>(r * cols + c)];
    }
    return g;
}

}  // namespace classattn
