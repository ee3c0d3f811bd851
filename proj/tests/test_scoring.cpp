#include <gtest/gtest.h>

#include "classattn/error.hpp"
#include "classattn/rng.hpp"
#include "classattn/scoring.hpp"
#include "support/oracles.hpp"

using namespace classattn;

namespace {

ClusteringResult clusters(std::vector<std::size_t> sizes, std::size_t noise) {
    ClusteringResult c;
    c.cluster_sizes = std::move(sizes);
    c.noise_count = noise;
    return c;
}

AttentionScore scored(double value, std::int64_t idx = 0) {
    AttentionScore s;
    s.value = value;
    s.n_points = 100;
    s.window_start = idx * 2000;
    s.window_end = s.window_start + 10000;
    return s;
}

std::vector<AttentionScore> series(std::initializer_list<double> values) {
    std::vector<AttentionScore> out;
    std::int64_t i = 0;
    for (double v : values) out.push_back(scored(v, i++));
    return out;
}

GazeDistribution gaussian(int n, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    GazeDistribution d;
    for (int i = 0; i < n; ++i) d.points.push_back({{}, 0.0, rng.normal(0.5, sigma), rng.normal(0.5, sigma)});
    return d;
}

}  // namespace

TEST(ScoreWindow, SingleClusterIsOne) {
    const auto s = score_window(clusters({500}, 0), 500);
    EXPECT_DOUBLE_EQ(s.value, 1.0);
    EXPECT_DOUBLE_EQ(s.concentration, 1.0);
    EXPECT_EQ(s.n_clusters, 1u);
}

TEST(ScoreWindow, TwoEqualClustersIsHalf) {
    const auto s = score_window(clusters({250, 250}, 0), 500);
    EXPECT_DOUBLE_EQ(s.value, 0.5);
    EXPECT_DOUBLE_EQ(s.clustered_fraction, 1.0);
    EXPECT_DOUBLE_EQ(s.concentration, 0.5);
}

TEST(ScoreWindow, NoClustersOrNoPointsIsZero) {
    EXPECT_EQ(score_window(clusters({}, 300), 300).value, 0.0);
    const auto empty = score_window(clusters({}, 0), 0);
    EXPECT_EQ(empty.value, 0.0);
    EXPECT_EQ(empty.n_clusters, 0u);
}

TEST(ScoreWindow, ValueIsProductOfFactors) {
    const auto s = score_window(clusters({600, 200}, 200), 1000);
    EXPECT_DOUBLE_EQ(s.clustered_fraction, 0.8);
    EXPECT_DOUBLE_EQ(s.concentration, 0.75);
    EXPECT_DOUBLE_EQ(s.value, s.clustered_fraction * s.concentration);
}

TEST(ScoreDistribution, UniformWindowScoresZero) {
    oracle::Gen gen(4);
    std::vector<GazePoint> pts;
    gen.uniform(pts, 9300);
    GazeDistribution d;
    d.points = pts;
    const auto s = score_distribution(d, ClusteringParams{});
    EXPECT_EQ(s.n_clusters, 0u);
    EXPECT_EQ(s.value, 0.0);
    EXPECT_FALSE(s.error);
}

TEST(ScoreDistribution, DegradesInsteadOfThrowing) {
    GazeDistribution d;
    d.window_start = 4000;
    d.window_end = 14000;
    d.points.push_back({{}, 5000, 0.5, 0.5});
    const auto s = score_distribution(d, ClusteringParams{});
    EXPECT_TRUE(s.error);
    EXPECT_EQ(s.value, 0.0);
    EXPECT_EQ(s.window_start, 4000);

    const auto empty = score_distribution(GazeDistribution{}, ClusteringParams{});
    EXPECT_FALSE(empty.error);
    EXPECT_EQ(empty.value, 0.0);
}

TEST(ScoreProperty, InvariantUnderPointPermutation) {
    oracle::Gen gen(8);
    for (int trial = 0; trial < 10; ++trial) {
        GazeDistribution d;
        gen.blob(d.points, 400, 0.3, 0.3, 0.05);
        gen.blob(d.points, 200, 0.7, 0.6, 0.05);
        gen.uniform(d.points, 100);
        auto shuffled = d;
        std::shuffle(shuffled.points.begin(), shuffled.points.end(), gen.eng);
        EXPECT_DOUBLE_EQ(score_distribution(d, {}).value, score_distribution(shuffled, {}).value);
    }
}

TEST(StatisticalScore, TightBlobSaturates) {
    RandomizationConfig cfg;
    cfg.trials = 500;
    const auto s = score_window_statistical(gaussian(5000, 0.02, 1), cfg);
    EXPECT_GE(s.value, 0.9);
    EXPECT_EQ(s.strategy, ScoreStrategy::Statistical);
}

TEST(StatisticalScore, UniformWindowNearZero) {
    RandomizationConfig cfg;
    cfg.trials = 500;
    GazeDistribution d;
    d.points = uniform_sample(5000, 42, 9);
    EXPECT_LE(score_window_statistical(d, cfg).value, 0.1);
}

TEST(StatisticalScore, Deterministic) {
    RandomizationConfig cfg;
    cfg.trials = 200;
    const auto d = gaussian(2000, 0.15, 3);
    EXPECT_EQ(score_window_statistical(d, cfg).value, score_window_statistical(d, cfg).value);
}

TEST(Alerts, SingleAlertOnThirdLowWindow) {
    const auto events = evaluate_alert(series({0.9, 0.4, 0.4, 0.4, 0.9}), AlertPolicy{0.5, 3, 5});
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].window_index, 3u);
    EXPECT_EQ(events[0].window_start, 3 * 2000);
    EXPECT_DOUBLE_EQ(events[0].score, 0.4);
}

TEST(Alerts, NoneWhenAboveThreshold) {
    EXPECT_TRUE(evaluate_alert(series({0.9, 0.6, 0.5, 0.7}), AlertPolicy{}).empty());
}

TEST(Alerts, NoneForShortRun) {
    EXPECT_TRUE(evaluate_alert(series({0.4, 0.4}), AlertPolicy{}).empty());
}

TEST(Alerts, SustainedLowFiresOnce) {
    std::vector<AttentionScore> s;
    for (int i = 0; i < 40; ++i) s.push_back(scored(0.1, i));
    EXPECT_EQ(evaluate_alert(s, AlertPolicy{}).size(), 1u);
}

TEST(Alerts, RearmsAfterRecoveryOutsideCooloff) {
    const auto events =
        evaluate_alert(series({0.1, 0.1, 0.1, 0.9, 0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1}), AlertPolicy{0.5, 3, 5});
    ASSERT_EQ(events.size(), 2u);
    EXPECT_EQ(events[0].window_index, 2u);
    EXPECT_EQ(events[1].window_index, 10u);
}

TEST(Alerts, EmptyWindowsCarryNoSignal) {
    auto s = series({0.1, 0.1, 0.1});
    AttentionScore empty;
    s.insert(s.begin() + 1, empty);
    EXPECT_EQ(evaluate_alert(s, AlertPolicy{}).size(), 1u);
    EXPECT_TRUE(evaluate_alert(std::vector<AttentionScore>(10, empty), AlertPolicy{}).empty());
}

TEST(Alerts, PolicyValidation) {
    EXPECT_THROW((AlertPolicy{1.2, 3, 5}.validate()), ConfigError);
    EXPECT_THROW((AlertPolicy{0.0, 3, 5}.validate()), ConfigError);
    EXPECT_THROW((AlertPolicy{0.5, 0, 5}.validate()), ConfigError);
    AlertEvaluator eval;
    EXPECT_THROW(eval.set_policy(AlertPolicy{1.2, 3, 5}), ConfigError);
    EXPECT_DOUBLE_EQ(eval.policy().threshold, 0.5);
}

TEST(AlertProperty, NoTwoAlertsWithinCooloff) {
    oracle::Gen gen(77);
    for (int trial = 0; trial < 500; ++trial) {
        AlertPolicy policy;
        policy.threshold = 0.1 + 0.8 * gen.u();
        policy.consecutive_windows = 1 + static_cast<int>(gen.u() * 4);
        policy.cooloff_windows = 1 + static_cast<int>(gen.u() * 8);
        std::vector<AttentionScore> s;
        for (int i = 0; i < 200; ++i) s.push_back(scored(gen.u(), i));
        const auto events = evaluate_alert(s, policy);
        for (std::size_t i = 1; i < events.size(); ++i) {
            EXPECT_GT(events[i].window_index - events[i - 1].window_index,
                      static_cast<std::uint64_t>(policy.cooloff_windows));
        }
        for (const auto& e : events) EXPECT_LT(e.score, policy.threshold);
    }
}
