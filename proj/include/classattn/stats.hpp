/**
 * stats.hpp — randomization test of a gaze distribution against uniform gaze.
 *
 * Random-Focus Diff  = cohesiveness(uniform reference) - cohesiveness(d)
 * Random-Random Diff = cohesiveness(U1) - cohesiveness(U2), U1, U2 uniform
 *
 * The Random-Random diffs over many trials form the null distribution; the
 * observed Random-Focus Diff is compared against it with a one-sided
 * (upper tail) z-test. Attentive gaze is tighter than uniform gaze, so it
 * lands on the right tail.
 *
 * Streams derived from cfg.seed (see rng.hpp):
 *   stream 0      uniform reference sample for random_focus_diff
 *   stream 1 + i  trial i of the null distribution (U1 then U2)
 */

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "classattn/gaze.hpp"

namespace classattn {

struct RandomizationConfig {
    int trials = 5000;
    int sample_size = 5000;
    std::uint64_t seed = 20211;
    double alpha = 0.05;
    // Evaluate trials on several threads. Results are identical either way.
    bool parallel = true;

    void validate() const;
    bool low_trials() const noexcept { return trials < 100; }
};

struct NullDistribution {
    std::vector<double> diffs;  // signed Random-Random diffs, trial order
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n - 1)
};

struct RandomizationResult {
    double random_focus_diff = 0.0;
    double reference_cohesiveness = 0.0;
    double focus_cohesiveness = 0.0;
    double null_mean = 0.0;
    double null_std = 0.0;
    double z = 0.0;
    double p = 1.0;
    // Share of null diffs at or above the observed diff.
    double empirical_tail = 0.0;
    bool reject_null = false;
    bool low_trials_warning = false;
};

std::vector<GazePoint> uniform_sample(int n, std::uint64_t seed, std::uint64_t stream);

GazeDistribution reference_sample(const RandomizationConfig& cfg);

double random_focus_diff(const GazeDistribution& d, const RandomizationConfig& cfg);
double random_focus_diff(const GazeDistribution& d, const GazeDistribution& reference);

std::vector<double> null_distribution(const RandomizationConfig& cfg);

// Mean and sample std with compensated (Neumaier) summation in index order.
NullDistribution summarize_null(std::vector<double> diffs);

double normal_upper_tail(double z) noexcept;

RandomizationResult randomization_test(const GazeDistribution& d, const RandomizationConfig& cfg);

// Reuses a precomputed null; reference defaults to the seeded stream-0
// sample but may be a recorded one (fixture replay).
RandomizationResult randomization_test(const GazeDistribution& d, const RandomizationConfig& cfg,
                                       const NullDistribution& null,
                                       const std::optional<GazeDistribution>& reference = std::nullopt);

}  // namespace classattn
