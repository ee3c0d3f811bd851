#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "classattn/analyze.hpp"
#include "classattn/clustering.hpp"
#include "classattn/error.hpp"
#include "classattn/simulator.hpp"
#include "support/oracles.hpp"

using namespace classattn;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = CLASSATTN_FIXTURE_DIR;

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("classattn_analyze_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

AnalyzeOptions quick() {
    AnalyzeOptions o;
    o.trials = 200;
    return o;
}

}  // namespace

TEST(Fixture, FocusRegionThreeReproducesPinnedValues) {
    const Record r = read_record(kFixtures / "focus_region3.ndjson");
    ASSERT_TRUE(r.reference.has_value());
    EXPECT_EQ(r.corrupt_lines, 0u);
    const GazeDistribution pooled = pooled_distribution(r);
    EXPECT_EQ(cohesiveness(pooled), 0.07365995468797122);
    EXPECT_EQ(cohesiveness(*r.reference), 0.17023544468407120);
    EXPECT_EQ(random_focus_diff(pooled, *r.reference), 0.09657548999609998);
    // Independent evaluation agrees to rounding.
    EXPECT_NEAR(oracle::two_pass_cohesiveness(pooled.points), 0.07365995468797122, 1e-15);
    for (const auto& p : pooled.points) {
        EXPECT_GE(p.x, 0.0);
        EXPECT_LE(p.x, 1.0);
    }
}

TEST(Fixture, UniformFixtureNearOneSixth) {
    const GazeDistribution pooled = pooled_distribution(read_record(kFixtures / "uniform.ndjson"));
    EXPECT_GT(pooled.size(), 9000u);
    EXPECT_NEAR(cohesiveness(pooled), 1.0 / 6.0, 0.01);
}

TEST(Fixture, AttentiveFixtureFormsOneCluster) {
    const Record r = read_record(kFixtures / "focus_region5.ndjson");
    const ClusteringResult c = dbscan(pooled_distribution(r), r.config.clustering);
    EXPECT_EQ(c.n_clusters(), 1u);
}

TEST(Analyze, ParsesAnalysisNames) {
    EXPECT_EQ(parse_analysis("randomization-test"), Analysis::Randomization);
    for (Analysis a : all_analyses()) EXPECT_EQ(parse_analysis(analysis_name(a)), a);
    EXPECT_THROW(parse_analysis("fourier"), ConfigError);
}

TEST(Analyze, OutputsAreByteIdentical) {
    const Record r = read_record(kFixtures / "focus_region5.ndjson");
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    const auto ra = analyze_record(r, a, quick());
    analyze_record(r, b, quick());
    ASSERT_GE(ra.files.size(), 12u);
    for (const auto& f : ra.files) {
        EXPECT_EQ(read_file(f), read_file(b / f.filename())) << f.filename();
    }
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST(Analyze, CohesivenessCsvStartsWithPooledRow) {
    const Record r = read_record(kFixtures / "focus_region3.ndjson");
    const auto dir = scratch("coh");
    AnalyzeOptions o;
    o.analyses = {Analysis::Cohesiveness};
    const auto rep = analyze_record(r, dir, o);
    std::istringstream csv(read_file(dir / "cohesiveness.csv"));
    std::string header;
    std::string pooled;
    std::getline(csv, header);
    std::getline(csv, pooled);
    EXPECT_EQ(header, "scope,start_ms,end_ms,n_points,cohesiveness,centroid_x,centroid_y");
    EXPECT_NE(pooled.find("pooled,0,10000,"), std::string::npos);
    EXPECT_NE(pooled.find(",0.07365995468797122,"), std::string::npos);
    EXPECT_EQ(rep.summary.at("pooled_cohesiveness").get<double>(), 0.07365995468797122);
    std::filesystem::remove_all(dir);
}

TEST(Analyze, RandomizationUsesRecordedReference) {
    const Record r = read_record(kFixtures / "focus_region3.ndjson");
    const auto dir = scratch("rand");
    AnalyzeOptions o = quick();
    o.analyses = {Analysis::Randomization};
    analyze_record(r, dir, o);
    const json j = json::parse(read_file(dir / "randomization.json"));
    EXPECT_EQ(j.at("reference"), "recorded");
    EXPECT_EQ(j.at("random_focus_diff").get<double>(), 0.09657548999609998);
    EXPECT_TRUE(j.at("reject_null").get<bool>());
    std::filesystem::remove_all(dir);
}

TEST(Analyze, CorruptLinesAreCountedAndSkipped) {
    const auto dir = scratch("corrupt");
    const auto src = read_file(kFixtures / "focus_region5.ndjson");
    std::istringstream in(src);
    std::ofstream out(dir / "damaged.ndjson");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        out << line << '\n';
        if (++n == 3) out << "{\"type\":\"batch\",\"t_ms\":\n";
        if (n == 10) out << "not json at all\n";
    }
    out.close();
    const Record r = read_record(dir / "damaged.ndjson");
    EXPECT_EQ(r.corrupt_lines, 2u);
    const auto rep = analyze_record(r, dir / "out", quick());
    EXPECT_EQ(rep.corrupt_lines, 2u);
    EXPECT_EQ(rep.summary.at("corrupt_lines"), 2);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "scores.csv"));
    std::filesystem::remove_all(dir);
}

TEST(Analyze, MissingRecordThrowsNotFound) {
    try {
        read_record("/nonexistent/record.ndjson");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
    }
}

TEST(Analyze, RebuiltWindowsMatchRecordedPointCounts) {
    const auto dir = scratch("windows");
    auto script = make_scenario(31, 10, StudentProfile{}, {{16000, SingleFocus{2}}, {8000, NoFocus{}}});
    ScenarioOptions o;
    o.record_path = dir / "r.ndjson";
    const auto summary = run_scenario(script, o);
    const Record r = read_record(*o.record_path);
    const auto windows = record_windows(r);
    ASSERT_EQ(windows.size(), summary.windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        EXPECT_EQ(windows[i].window_start, summary.windows[i].score.window_start);
        EXPECT_EQ(windows[i].size(), summary.windows[i].score.n_points);
    }
    std::filesystem::remove_all(dir);
}

TEST(Replay, FixturesReplayExactly) {
    for (const char* name : {"focus_region3.ndjson", "focus_region7.ndjson", "uniform.ndjson"}) {
        const Record r = read_record(kFixtures / name);
        const ReplayResult res = replay_record(r);
        EXPECT_TRUE(res.ok()) << name << (res.differences.empty() ? "" : res.differences.front());
        EXPECT_EQ(res.recorded.size(), res.replayed.size());
        EXPECT_FALSE(res.recorded.empty());
    }
}

TEST(Replay, ReproducesAlertsAndThresholdChanges) {
    const auto dir = scratch("replay");
    const auto path = dir / "live.ndjson";
    {
        ManualClock clock;
        Session::Options opts;
        opts.clock = clock.clock();
        opts.record = std::make_shared<RecordWriter>(path);
        Session s("live", SessionConfig{}, std::move(opts));
        const auto tok = s.join();
        const auto script = make_scenario(44, 12, StudentProfile{}, {{30000, SingleFocus{5}}, {30000, NoFocus{}}});
        const auto g = generate_stream(script);
        bool changed = false;
        for (const auto& b : schedule(g)) {
            clock.set(static_cast<double>(b.t_ms));
            s.tick();
            if (b.t_ms >= 20000 && !changed) {
                s.set_threshold(0.6);
                changed = true;
            }
            const auto& st = g.students[b.student];
            s.ingest(tok, st.batch_samples(st.batches[b.batch]));
        }
        s.close(60000.0, "done");
    }
    const Record r = read_record(path);
    ASSERT_EQ(r.threshold_changes.size(), 1u);
    const ReplayResult res = replay_record(r, dir / "replayed.ndjson");
    EXPECT_TRUE(res.ok()) << (res.differences.empty() ? "" : res.differences.front());
    std::size_t alerts = 0;
    for (const auto& e : res.replayed) alerts += e.alert;
    EXPECT_GE(alerts, 1u);
    EXPECT_TRUE(replay_record(read_record(dir / "replayed.ndjson")).ok());
    std::filesystem::remove_all(dir);
}

TEST(Replay, DetectsTamperedEvents) {
    const auto dir = scratch("tamper");
    const auto src = read_file(kFixtures / "focus_region5.ndjson");
    std::istringstream in(src);
    std::ofstream out(dir / "t.ndjson");
    std::string line;
    while (std::getline(in, line)) {
        json j = json::parse(line);
        if (j.at("type") == "window") j["score"] = 0.123;
        out << j.dump() << '\n';
    }
    out.close();
    const ReplayResult res = replay_record(read_record(dir / "t.ndjson"));
    EXPECT_FALSE(res.ok());
    EXPECT_GE(res.mismatches, 1u);
    std::filesystem::remove_all(dir);
}
