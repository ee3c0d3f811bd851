// Regenerates the recorded session fixtures under tests/fixtures.
//
//   focus_region<N>.ndjson  31 attentive students, 10 s on region N, MSE 0.07
//   uniform.ndjson          31 distracted students, 10 s
//
// focus_region3 is calibrated: its pooled cohesiveness and its recorded
// uniform reference sample are pinned to exact target values, so replaying
// it reproduces them bit-for-bit.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>

#include <CLI11.hpp>

#include "classattn/analyze.hpp"
#include "classattn/record.hpp"
#include "classattn/simulator.hpp"
#include "classattn/stats.hpp"

using namespace classattn;

namespace {

constexpr const char* kCreatedAt = "2021-03-01T10:00:00.000Z";
constexpr double kFocusTarget = 0.07365995468797122;
constexpr double kReferenceTarget = 0.17023544468407120;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Moves x of point j until cohesiveness equals target exactly; false when no
// representable x near the bisection result hits it.
bool pin_exact(std::vector<GazePoint>& pts, std::size_t j, double target) {
    const double saved = pts[j].x;
    const auto g = [&](double v) {
        pts[j].x = v;
        return cohesiveness(pts);
    };
    const Centroid c = centroid(pts);
    // Moving away from the centroid increases cohesiveness.
    const double outward = pts[j].x >= c.x ? 1.0 : -1.0;
    double lo = saved;
    double hi = saved;
    const double step = 1e-3;
    if (g(saved) < target) {
        hi = clamp01(saved + outward * step);
    } else {
        lo = clamp01(saved - outward * step);
    }
    // lo and hi may be in either numeric order; keep g(lo) <= target <= g(hi).
    if (!(g(lo) <= target && g(hi) >= target)) {
        pts[j].x = saved;
        return false;
    }
    for (int i = 0; i < 200 && lo != hi; ++i) {
        const double mid = lo + (hi - lo) / 2.0;
        if (mid == lo || mid == hi) break;
        (g(mid) < target ? lo : hi) = mid;
    }
    double v = lo;
    for (int k = 0; k < 20000; ++k) {
        if (g(v) == target) return true;
        v = std::nextafter(v, hi);
        if (v == hi && g(v) != target) break;
    }
    pts[j].x = saved;
    return false;
}

// Scales the points about their centroid (clamping into the unit square)
// until cohesiveness is within 1e-12 of target, then pins it exactly.
void calibrate(std::vector<GazePoint>& pts, double target) {
    for (int it = 0; it < 100; ++it) {
        const double c0 = cohesiveness(pts);
        if (std::abs(c0 - target) < 1e-12) break;
        const Centroid c = centroid(pts);
        const double s = std::sqrt(target / c0);
        for (auto& p : pts) {
            p.x = clamp01(c.x + s * (p.x - c.x));
            p.y = clamp01(c.y + s * (p.y - c.y));
        }
    }
    // Prefer points far from the centroid: they move cohesiveness fastest.
    const Centroid c = centroid(pts);
    std::vector<std::size_t> order(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = std::abs(pts[a].x - c.x);
        const double db = std::abs(pts[b].x - c.x);
        return da != db ? da > db : a < b;
    });
    for (std::size_t j : order) {
        if (pts[j].x <= 0.0 || pts[j].x >= 1.0) continue;
        if (pin_exact(pts, j, target)) return;
    }
    throw std::runtime_error("calibration failed");
}

ScenarioScript fixture_script(std::uint64_t seed, std::optional<int> region) {
    StudentProfile p;
    if (!region) p.behavior = Behavior::Distracted;
    auto s = make_scenario(seed, 31, p, {{10000, region ? Focus{SingleFocus{*region}} : Focus{NoFocus{}}}});
    s.name = region ? "focus_region" + std::to_string(*region) : "uniform";
    return s;
}

// Admitted point index -> (student, sample) in the order the session sees them.
std::vector<std::pair<std::size_t, std::size_t>> admitted_order(const ScenarioScript& s, const GeneratedStream& g) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& b : schedule(g)) {
        if (b.t_ms >= s.total_ms()) continue;
        const auto& batch = g.students[b.student].batches[b.batch];
        for (std::size_t k = batch.begin; k < batch.end; ++k) out.emplace_back(b.student, k);
    }
    return out;
}

void write_fixture(const std::filesystem::path& path, const ScenarioScript& s, const GeneratedStream& g,
                   std::optional<GazeDistribution> reference = std::nullopt) {
    ScenarioOptions o;
    o.record_path = path;
    o.session_id = s.name;
    o.created_at = kCreatedAt;
    o.reference = std::move(reference);
    run_stream(s, g, o);
    std::printf("wrote %s\n", path.string().c_str());
}

void make_calibrated(const std::filesystem::path& dir) {
    const auto script = fixture_script(20210301, 3);
    GeneratedStream g = generate_stream(script);
    // Keep every sample on screen so admission leaves the values untouched.
    for (auto& st : g.students) {
        for (auto& smp : st.samples) {
            smp.x = clamp01(smp.x);
            smp.y = clamp01(smp.y);
        }
    }
    const auto order = admitted_order(script, g);
    std::vector<GazePoint> pts;
    for (const auto& [i, k] : order) {
        const auto& smp = g.students[i].samples[k];
        pts.push_back({{}, smp.t_ms, smp.x, smp.y});
    }
    calibrate(pts, kFocusTarget);
    for (std::size_t n = 0; n < order.size(); ++n) {
        auto& smp = g.students[order[n].first].samples[order[n].second];
        smp.x = pts[n].x;
        smp.y = pts[n].y;
    }

    RandomizationConfig rc;
    GazeDistribution ref = reference_sample(rc);
    calibrate(ref.points, kReferenceTarget);

    const auto path = dir / "focus_region3.ndjson";
    write_fixture(path, script, g, ref);

    // Check what a reader of the file will see.
    const Record r = read_record(path);
    const GazeDistribution pooled = pooled_distribution(r);
    const double focus = cohesiveness(pooled);
    const double diff = random_focus_diff(pooled, *r.reference);
    std::printf("focus cohesiveness %.17g, random-focus diff %.17g\n", focus, diff);
    if (focus != kFocusTarget || cohesiveness(*r.reference) != kReferenceTarget) {
        throw std::runtime_error("calibrated values did not survive the round trip");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regenerate recorded session fixtures"};
    std::filesystem::path out = "tests/fixtures";
    app.add_option("--out", out, "fixture directory");
    CLI11_PARSE(app, argc, argv);
    std::filesystem::create_directories(out);
    try {
        make_calibrated(out);
        for (int region = 1; region <= 9; ++region) {
            if (region == 3) continue;
            const auto s = fixture_script(20210300 + static_cast<std::uint64_t>(region), region);
            write_fixture(out / (s.name + ".ndjson"), s, generate_stream(s));
        }
        const auto u = fixture_script(20210310, std::nullopt);
        write_fixture(out / "uniform.ndjson", u, generate_stream(u));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
