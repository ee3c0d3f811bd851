/**
 * rng.hpp — portable seeded random streams.
 *
 * Generator: xoshiro256** (Blackman & Vigna). State is expanded from a
 * 64-bit seed with SplitMix64, so the output sequence is fully determined by
 * integer arithmetic and is identical on every platform.
 *
 * Stream splitting: Rng(seed, stream) seeds the SplitMix64 expander with
 *     mix64(seed) ^ mix64(stream * 0x9E3779B97F4A7C15 + 0xD1B54A32D192ED03)
 * where mix64 is the SplitMix64 output finalizer. Distinct stream ids give
 * statistically independent sequences from one user seed; this is how
 * per-trial and per-student generators are derived.
 *
 * uniform() maps the top 53 bits to [0, 1). normal() uses the Marsaglia
 * polar method and caches the second deviate.
 */

#pragma once

#include <array>
#include <cstdint>

namespace classattn {

std::uint64_t mix64(std::uint64_t z) noexcept;

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return next(); }
    std::uint64_t next() noexcept;

    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    double normal() noexcept;
    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }
    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace classattn
