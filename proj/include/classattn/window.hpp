#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "classattn/gaze.hpp"

namespace classattn {

struct WindowConfig {
    std::int64_t window_len_ms = 10000;
    std::int64_t stride_ms = 2000;

    // Throws ConfigError when a length is non-positive or stride > window.
    void validate() const;
};

/**
 * Sliding-window accumulator. Windows are [k*stride, k*stride + len) for
 * k >= 0. A window closes once the clock reaches its end; points older than
 * the oldest open window are late and discarded.
 *
 * Single writer. Closed windows are returned by value.
 */
class WindowAccumulator {
public:
    explicit WindowAccumulator(WindowConfig cfg);

    const WindowConfig& config() const noexcept { return cfg_; }

    // False when the point is late (t < start of the oldest open window).
    bool add(const GazePoint& p);

    // Closes every window whose end is <= now_ms.
    std::vector<GazeDistribution> advance_to(double now_ms);

    // Closes every remaining window that starts at or before the newest
    // point or clock value seen. Used at end of stream.
    std::vector<GazeDistribution> flush();

    // Drops windows without emitting them so that the next window to close
    // is the newest one ending at or before now_ms. Returns how many were
    // skipped.
    std::uint64_t skip_to(double now_ms);

    std::int64_t next_window_start() const noexcept { return next_start_; }
    std::uint64_t dropped_late() const noexcept { return dropped_late_; }
    std::size_t buffered() const noexcept { return buffer_.size(); }

private:
    GazeDistribution snapshot(std::int64_t start) const;
    void prune();

    WindowConfig cfg_;
    std::vector<GazePoint> buffer_;
    std::int64_t next_start_ = 0;
    double high_water_ = -1.0;
    std::uint64_t dropped_late_ = 0;
};

struct WindowStreamResult {
    std::vector<GazeDistribution> windows;
    std::uint64_t dropped_late = 0;
};

// Batch windowing of a finished stream: closes windows as the newest
// timestamp advances, then flushes every window starting at or before the
// last point.
WindowStreamResult window_stream(std::span<const GazePoint> points, const WindowConfig& cfg);

}  // namespace classattn
