#include "classattn/gaze.hpp"

#include <algorithm>
#include <cmath>

#include "classattn/error.hpp"

namespace classattn {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyInput: return "empty_input";
        case ErrorCode::InsufficientPoints: return "insufficient_points";
        case ErrorCode::DegenerateNull: return "degenerate_null";
        case ErrorCode::Validation: return "validation";
        case ErrorCode::Auth: return "auth";
        case ErrorCode::NotFound: return "not_found";
        case ErrorCode::SessionClosed: return "session_closed";
        case ErrorCode::Parse: return "parse";
    }
    return "unknown";
}

AdmittedCoord admit(double x, double y) noexcept {
    if (!std::isfinite(x) || !std::isfinite(y)) {
        return {Admission::NonFinite, 0.0, 0.0};
    }
    constexpr double lo = -kAdmissionMargin;
    constexpr double hi = 1.0 + kAdmissionMargin;
    if (x < lo || x > hi || y < lo || y > hi) {
        return {Admission::OutOfRange, 0.0, 0.0};
    }
    const double cx = std::clamp(x, 0.0, 1.0);
    const double cy = std::clamp(y, 0.0, 1.0);
    const bool clamped = cx != x || cy != y;
    return {clamped ? Admission::Clamped : Admission::Accepted, cx, cy};
}

Centroid centroid(std::span<const GazePoint> points) {
    if (points.empty()) {
        throw Error(ErrorCode::EmptyInput, "centroid of an empty gaze distribution");
    }
    // Mean of offsets from the first point: exact when all points coincide.
    const double x0 = points.front().x;
    const double y0 = points.front().y;
    double sx = 0.0;
    double sy = 0.0;
    for (const auto& p : points) {
        sx += p.x - x0;
        sy += p.y - y0;
    }
    const auto n = static_cast<double>(points.size());
    return {x0 + sx / n, y0 + sy / n};
}

Centroid centroid(const GazeDistribution& d) { return centroid(std::span{d.points}); }

double cohesiveness(std::span<const GazePoint> points) {
    if (points.empty()) {
        throw Error(ErrorCode::EmptyInput, "cohesiveness of an empty gaze distribution");
    }
    const Centroid c = centroid(points);
    double acc = 0.0;
    for (const auto& p : points) {
        const double dx = c.x - p.x;
        const double dy = c.y - p.y;
        acc += dx * dx + dy * dy;
    }
    return acc / static_cast<double>(points.size());
}

double cohesiveness(const GazeDistribution& d) { return cohesiveness(std::span{d.points}); }

}  // namespace classattn
