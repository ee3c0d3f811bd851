#pragma once

#include <cstdint>
#include <vector>

#include "classattn/gaze.hpp"

namespace classattn {

// Row-major count grid over the unit square; row 0 is the top of the screen.
struct HeatmapGrid {
    int rows = 32;
    int cols = 32;
    std::vector<std::uint32_t> counts;
    std::int64_t window_start = 0;
    std::int64_t window_end = 0;

    std::uint64_t total() const noexcept;
    std::uint32_t at(int row, int col) const { return counts.at(static_cast<std::size_t>(row * cols + col)); }

    static HeatmapGrid bin(const GazeDistribution& d, int rows = 32, int cols = 32);
};

}  // namespace classattn
