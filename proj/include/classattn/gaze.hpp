/**
 * gaze.hpp — gaze sample model and the cohesiveness metric.
 *
 * Coordinates are normalized by screen size on the client (x / width,
 * y / height), so an on-screen gaze lives in the unit square with y growing
 * downwards. Timestamps are milliseconds since session start.
 */

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace classattn {

// Per-session anonymous ordinal handed out on join. Never a client identity.
struct StudentId {
    std::uint32_t value = 0;
    friend bool operator==(StudentId, StudentId) = default;
};

struct GazePoint {
    StudentId student;
    double t_ms = 0.0;
    double x = 0.0;
    double y = 0.0;
};

struct GazeDistribution {
    std::vector<GazePoint> points;
    std::int64_t window_start = 0;
    std::int64_t window_end = 0;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
};

struct Centroid {
    double x = 0.0;
    double y = 0.0;
};

// Points with any coordinate outside [-margin, 1 + margin] are off-screen and
// dropped; the rest are clamped into [0, 1].
inline constexpr double kAdmissionMargin = 0.1;

enum class Admission { Accepted, Clamped, OutOfRange, NonFinite };

struct AdmittedCoord {
    Admission status = Admission::Accepted;
    double x = 0.0;
    double y = 0.0;

    bool admitted() const noexcept {
        return status == Admission::Accepted || status == Admission::Clamped;
    }
};

AdmittedCoord admit(double x, double y) noexcept;

// Both throw Error(EmptyInput) on an empty distribution.
Centroid centroid(std::span<const GazePoint> points);
Centroid centroid(const GazeDistribution& d);

/// Mean squared distance of the points to their centroid (population
/// normalization, divide by N). Evaluated as a plain two-pass sum in input
/// order so recorded fixtures reproduce bit-for-bit.
double cohesiveness(std::span<const GazePoint> points);
double cohesiveness(const GazeDistribution& d);

}  // namespace classattn
