#include "classattn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "classattn/error.hpp"
#include "classattn/rng.hpp"

namespace classattn {

void RandomizationConfig::validate() const {
    if (trials < 2) {
        throw ConfigError("trials", "must be at least 2");
    }
    if (sample_size < 1) {
        throw ConfigError("sample_size", "must be positive");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha", "must lie in (0, 1)");
    }
}

namespace {

void fill_uniform(std::vector<GazePoint>& out, int n, Rng& rng) {
    out.resize(static_cast<std::size_t>(n));
    for (auto& p : out) {
        p.x = rng.uniform();
        p.y = rng.uniform();
    }
}

class NeumaierSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace

std::vector<GazePoint> uniform_sample(int n, std::uint64_t seed, std::uint64_t stream) {
    Rng rng(seed, stream);
    std::vector<GazePoint> points;
    fill_uniform(points, n, rng);
    return points;
}

GazeDistribution reference_sample(const RandomizationConfig& cfg) {
    GazeDistribution d;
    d.points = uniform_sample(cfg.sample_size, cfg.seed, 0);
    return d;
}

double random_focus_diff(const GazeDistribution& d, const GazeDistribution& reference) {
    if (d.empty()) {
        throw Error(ErrorCode::EmptyInput, "random-focus diff of an empty gaze distribution");
    }
    return cohesiveness(reference) - cohesiveness(d);
}

double random_focus_diff(const GazeDistribution& d, const RandomizationConfig& cfg) {
    cfg.validate();
    if (d.empty()) {
        throw Error(ErrorCode::EmptyInput, "random-focus diff of an empty gaze distribution");
    }
    return random_focus_diff(d, reference_sample(cfg));
}

std::vector<double> null_distribution(const RandomizationConfig& cfg) {
    cfg.validate();
    const auto trials = static_cast<std::size_t>(cfg.trials);
    std::vector<double> diffs(trials);

    auto run_range = [&cfg, &diffs](std::size_t begin, std::size_t end) {
        std::vector<GazePoint> a;
        std::vector<GazePoint> b;
        for (std::size_t i = begin; i < end; ++i) {
            Rng rng(cfg.seed, 1 + i);
            fill_uniform(a, cfg.sample_size, rng);
            fill_uniform(b, cfg.sample_size, rng);
            diffs[i] = cohesiveness(a) - cohesiveness(b);
        }
    };

    const std::size_t workers =
        cfg.parallel ? std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, trials) : 1;
    if (workers == 1) {
        run_range(0, trials);
        return diffs;
    }
    {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (trials + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(trials, begin + chunk);
            if (begin < end) pool.emplace_back(run_range, begin, end);
        }
    }
    return diffs;
}

NullDistribution summarize_null(std::vector<double> diffs) {
    NullDistribution null;
    null.diffs = std::move(diffs);
    const auto n = static_cast<double>(null.diffs.size());
    if (null.diffs.empty()) {
        return null;
    }
    NeumaierSum sum;
    for (const double v : null.diffs) sum.add(v);
    null.mean = sum.value() / n;
    if (null.diffs.size() > 1) {
        NeumaierSum sq;
        for (const double v : null.diffs) sq.add((v - null.mean) * (v - null.mean));
        null.stddev = std::sqrt(sq.value() / (n - 1.0));
    }
    return null;
}

double normal_upper_tail(double z) noexcept { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

RandomizationResult randomization_test(const GazeDistribution& d, const RandomizationConfig& cfg,
                                       const NullDistribution& null,
                                       const std::optional<GazeDistribution>& reference) {
    cfg.validate();
    if (d.empty()) {
        throw Error(ErrorCode::EmptyInput, "randomization test of an empty gaze distribution");
    }
    if (!(null.stddev > 0.0) || !std::isfinite(null.stddev)) {
        throw Error(ErrorCode::DegenerateNull, "null distribution has zero spread");
    }
    RandomizationResult r;
    const GazeDistribution ref = reference ? *reference : reference_sample(cfg);
    r.reference_cohesiveness = cohesiveness(ref);
    r.focus_cohesiveness = cohesiveness(d);
    r.random_focus_diff = r.reference_cohesiveness - r.focus_cohesiveness;
    r.null_mean = null.mean;
    r.null_std = null.stddev;
    r.z = (r.random_focus_diff - null.mean) / null.stddev;
    r.p = normal_upper_tail(r.z);
    const auto above = std::count_if(null.diffs.begin(), null.diffs.end(),
                                     [&r](double v) { return v >= r.random_focus_diff; });
    r.empirical_tail = null.diffs.empty() ? 0.0
                                          : static_cast<double>(above) / static_cast<double>(null.diffs.size());
    r.reject_null = r.p < cfg.alpha;
    r.low_trials_warning = cfg.low_trials();
    return r;
}

RandomizationResult randomization_test(const GazeDistribution& d, const RandomizationConfig& cfg) {
    if (d.empty()) {
        throw Error(ErrorCode::EmptyInput, "randomization test of an empty gaze distribution");
    }
    return randomization_test(d, cfg, summarize_null(null_distribution(cfg)));
}

}  // namespace classattn
