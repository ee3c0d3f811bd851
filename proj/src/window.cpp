#include "classattn/window.hpp"

#include <algorithm>
#include <cmath>

#include "classattn/error.hpp"

namespace classattn {

void WindowConfig::validate() const {
    if (window_len_ms <= 0) {
        throw ConfigError("window_len_ms", "must be positive");
    }
    if (stride_ms <= 0) {
        throw ConfigError("stride_ms", "must be positive");
    }
    if (stride_ms > window_len_ms) {
        throw ConfigError("stride_ms", "must not exceed window_len_ms");
    }
}

WindowAccumulator::WindowAccumulator(WindowConfig cfg) : cfg_(cfg) { cfg_.validate(); }

bool WindowAccumulator::add(const GazePoint& p) {
    if (p.t_ms < static_cast<double>(next_start_)) {
        ++dropped_late_;
        return false;
    }
    buffer_.push_back(p);
    high_water_ = std::max(high_water_, p.t_ms);
    return true;
}

GazeDistribution WindowAccumulator::snapshot(std::int64_t start) const {
    GazeDistribution d;
    d.window_start = start;
    d.window_end = start + cfg_.window_len_ms;
    const auto lo = static_cast<double>(d.window_start);
    const auto hi = static_cast<double>(d.window_end);
    for (const auto& p : buffer_) {
        if (p.t_ms >= lo && p.t_ms < hi) {
            d.points.push_back(p);
        }
    }
    return d;
}

void WindowAccumulator::prune() {
    const auto lo = static_cast<double>(next_start_);
    std::erase_if(buffer_, [lo](const GazePoint& p) { return p.t_ms < lo; });
}

std::vector<GazeDistribution> WindowAccumulator::advance_to(double now_ms) {
    std::vector<GazeDistribution> out;
    high_water_ = std::max(high_water_, now_ms);
    while (static_cast<double>(next_start_ + cfg_.window_len_ms) <= now_ms) {
        out.push_back(snapshot(next_start_));
        next_start_ += cfg_.stride_ms;
    }
    if (!out.empty()) {
        prune();
    }
    return out;
}

std::vector<GazeDistribution> WindowAccumulator::flush() {
    std::vector<GazeDistribution> out;
    while (static_cast<double>(next_start_) <= high_water_) {
        out.push_back(snapshot(next_start_));
        next_start_ += cfg_.stride_ms;
    }
    prune();
    return out;
}

std::uint64_t WindowAccumulator::skip_to(double now_ms) {
    const auto len = static_cast<double>(cfg_.window_len_ms);
    if (now_ms < static_cast<double>(next_start_) + len) {
        return 0;
    }
    // Last window whose end is <= now: start = floor((now - len) / stride) * stride.
    const auto last_start = static_cast<std::int64_t>(std::floor((now_ms - len) / static_cast<double>(cfg_.stride_ms))) *
                            cfg_.stride_ms;
    if (last_start <= next_start_) {
        return 0;
    }
    const auto skipped = static_cast<std::uint64_t>((last_start - next_start_) / cfg_.stride_ms);
    next_start_ = last_start;
    prune();
    return skipped;
}

WindowStreamResult window_stream(std::span<const GazePoint> points, const WindowConfig& cfg) {
    WindowAccumulator acc(cfg);
    WindowStreamResult result;
    for (const auto& p : points) {
        auto closed = acc.advance_to(p.t_ms);
        std::move(closed.begin(), closed.end(), std::back_inserter(result.windows));
        acc.add(p);
    }
    auto rest = acc.flush();
    std::move(rest.begin(), rest.end(), std::back_inserter(result.windows));
    result.dropped_late = acc.dropped_late();
    return result;
}

}  // namespace classattn
