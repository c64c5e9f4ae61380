#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cfmort/error.hpp"
#include "cfmort/evalkit.hpp"
#include "cfmort/forecasters.hpp"
#include "cfmort/ingest.hpp"
#include "cfmort/model_config.hpp"
#include "cfmort/parallel.hpp"
#include "cfmort/series.hpp"

namespace cfmort {

// ---------------------------------------------------------------------------
// Aggregation

struct Summary {
    double mean = 0.0;
    double sd = 0.0;  ///< sample sd (n - 1); 0 when n == 1
    std::size_t n = 0;

    friend bool operator==(const Summary&, const Summary&) = default;
};

/// Mean and sample standard deviation. A constant sample reports that constant and sd 0 exactly.
inline Summary summarize(std::span<const double> xs) {
    if (xs.empty()) fail(ErrorKind::empty, "cannot summarize an empty sample");
    Summary s;
    s.n = xs.size();
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    if (*lo == *hi) {
        s.mean = *lo;
        return s;
    }
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(s.n);
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    return s;
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) fail(ErrorKind::empty, "median of an empty sample");
    std::sort(xs.begin(), xs.end());
    const std::size_t k = xs.size() / 2;
    return xs.size() % 2 ? xs[k] : 0.5 * (xs[k - 1] + xs[k]);
}

/// Half-width-style CI spread used for trial convergence: 1.96 sd / sqrt(n).
inline double ci_width(double sd, std::size_t n) {
    if (n == 0) fail(ErrorKind::empty, "ci width needs n >= 1");
    return kZ975 * sd / std::sqrt(static_cast<double>(n));
}

struct MetricsSummary {
    Summary rmse, mae, mape, pi_coverage, pi_width;

    friend bool operator==(const MetricsSummary&, const MetricsSummary&) = default;
};

inline MetricsSummary summarize(const std::vector<MetricsReport>& reports) {
    auto pick = [&](double MetricsReport::*field) {
        std::vector<double> xs;
        xs.reserve(reports.size());
        for (const auto& r : reports) xs.push_back(r.*field);
        return summarize(xs);
    };
    return {pick(&MetricsReport::rmse), pick(&MetricsReport::mae), pick(&MetricsReport::mape),
            pick(&MetricsReport::pi_coverage), pick(&MetricsReport::pi_width)};
}

// ---------------------------------------------------------------------------
// Single trials

struct TrialOptions {
    std::size_t workers = 1;
    double alpha = 0.05;
    /// Stage 2 conformal residuals: false keeps the tuning-stage validation residuals,
    /// true takes the retrained model's one-step errors on the validation months.
    bool held_back_residuals = false;
    /// Keep each trial's refitted model (checkpoints); off by default to bound memory.
    bool keep_models = false;
    /// Called with the trial index as each trial finishes; may run on worker threads.
    std::function<void(std::size_t)> on_trial;
};

struct TrialRecord {
    std::uint64_t seed = 0;
    std::string status = "ok";  ///< "ok" or the failing error kind
    std::string message;

    // Stage 1: fit on train, score validation.
    MetricsReport train;
    MetricsReport validation;
    ProjectionResult validation_path;
    std::vector<double> validation_residuals;
    double radius = 0.0;  ///< conformal radius; 0 for SARIMA, which keeps analytic intervals

    // Stage 2: refit on train + validation, project. Absent for tuning-only runs.
    std::optional<MetricsReport> final_train;
    std::optional<MetricsReport> projection;
    double projection_radius = 0.0;
    ProjectionResult projection_path;
    std::shared_ptr<const TrainedModel> final_model;  ///< set when TrialOptions::keep_models

    bool ok() const { return status == "ok"; }
};

namespace trials_detail {

/// One-step in-sample fit with intervals. Neural: teacher-forced windows at radius q.
/// SARIMA: CSS fitted values at +-1.96 sigma.
inline ProjectionResult in_sample_path(const TrainedModel& m, const MonthlySeries& series, double q) {
    if (m.config.family == Family::sarima) {
        const auto fit = sarima_in_sample(*m.sarima);
        return apply_intervals(m.sarima->anchor.plus(static_cast<int>(fit.first)), fit.fitted,
                               kZ975 * std::sqrt(m.sarima->sigma2));
    }
    const auto& v = series.values();
    const std::size_t L = m.lookback();
    if (v.size() <= L) fail(ErrorKind::insufficient_data, "series shorter than lookback + 1");
    std::vector<double> points;
    points.reserve(v.size() - L);
    for (std::size_t i = L; i < v.size(); ++i) points.push_back(predict_next(m, std::span<const double>(v).subspan(i - L, L)));
    return apply_intervals(series.month_at(L), points, q);
}

inline MetricsReport score(const MonthlySeries& observed, const ProjectionResult& path) { return evaluate(observed, path); }

inline void stage_one(TrialRecord& rec, const ModelConfig& config, const TuningSplit& split, const TrialOptions& opts) {
    const auto model = train(config, split.train, rec.seed);
    const int H = static_cast<int>(split.validation.size());
    if (config.family == Family::sarima) {
        rec.validation_path = project(model, split.train, H);
        for (std::size_t i = 0; i < split.validation.size(); ++i)
            rec.validation_residuals.push_back(std::abs(split.validation[i] - rec.validation_path.points[i]));
        rec.train = score(split.train, in_sample_path(model, split.train, 0.0));
    } else {
        auto v = validate(model, split.train, split.validation);
        rec.validation_residuals = std::move(v.residuals);
        rec.radius = conformal_radius(rec.validation_residuals, opts.alpha);
        rec.validation_path = apply_intervals(split.validation.start(), v.predictions, rec.radius);
        rec.train = score(split.train, in_sample_path(model, split.train, rec.radius));
    }
    rec.validation = score(split.validation, rec.validation_path);
}

inline void stage_two(TrialRecord& rec, const ModelConfig& config, const DatasetSplit& split, const TrialOptions& opts) {
    const auto combined = split.train_and_validation();
    const auto model = train(config, combined, rec.seed);
    if (opts.keep_models) rec.final_model = std::make_shared<const TrainedModel>(model);
    const int H = static_cast<int>(split.projection.size());
    if (config.family == Family::sarima) {
        rec.projection_path = project(model, combined, H);
        rec.final_train = score(combined, in_sample_path(model, combined, 0.0));
    } else {
        double q = rec.radius;
        if (opts.held_back_residuals) {
            const auto fit = in_sample_path(model, combined, 0.0);
            std::vector<double> residuals;
            for (std::size_t i = 0; i < fit.size(); ++i) {
                const YearMonth month = fit.month_at(i);
                if (split.validation.covers(month))
                    residuals.push_back(std::abs(
                        split.validation[static_cast<std::size_t>(months_between(split.validation.start(), month))] -
                        fit.points[i]));
            }
            q = conformal_radius(residuals, opts.alpha);
        }
        rec.projection_radius = q;
        rec.projection_path = apply_intervals(project(model, combined, H), q);
        rec.final_train = score(combined, in_sample_path(model, combined, q));
    }
    rec.projection = score(split.projection, rec.projection_path);
}

/// Runs one trial; library errors are captured in the record instead of propagating.
inline TrialRecord run_one(const ModelConfig& config, const DatasetSplit& split, std::uint64_t seed,
                           const TrialOptions& opts) {
    TrialRecord rec;
    rec.seed = seed;
    try {
        stage_one(rec, config, split.masked(), opts);
        if (!split.projection.empty()) stage_two(rec, config, split, opts);
    } catch (const Error& e) {
        TrialRecord failed;
        failed.seed = seed;
        failed.status = std::string(to_string(e.kind()));
        failed.message = e.what();
        return failed;
    }
    return rec;
}

}  // namespace trials_detail

// ---------------------------------------------------------------------------
// Ensembles

struct TrialEnsemble {
    ModelConfig config;
    std::vector<std::uint64_t> seeds;
    std::vector<TrialRecord> per_trial;  ///< aligned with seeds, failures included
    MetricsSummary train;
    MetricsSummary validation;
    std::optional<MetricsSummary> final_train;
    std::optional<MetricsSummary> projection;
    std::map<std::string, int> census;  ///< status -> trial count

    std::size_t ok_count() const {
        const auto it = census.find("ok");
        return it == census.end() ? 0 : static_cast<std::size_t>(it->second);
    }

    /// Element-wise mean of the successful trials' projection paths and bounds.
    ProjectionResult mean_projection() const {
        ProjectionResult out;
        std::size_t k = 0;
        for (const auto& t : per_trial) {
            if (!t.ok() || !t.projection) continue;
            const auto& p = t.projection_path;
            if (k == 0) {
                out.start = p.start;
                out.level = p.level;
                out.points.assign(p.size(), 0.0);
                out.lower.assign(p.size(), 0.0);
                out.upper.assign(p.size(), 0.0);
            }
            for (std::size_t i = 0; i < p.size(); ++i) {
                out.points[i] += p.points[i];
                out.lower[i] += p.lower[i];
                out.upper[i] += p.upper[i];
            }
            ++k;
        }
        if (k == 0) fail(ErrorKind::not_found, "ensemble has no projection");
        const ProjectionResult* first = nullptr;
        bool identical = true;
        for (const auto& t : per_trial) {
            if (!t.ok() || !t.projection) continue;
            if (!first) first = &t.projection_path;
            identical = identical && t.projection_path == *first;
        }
        if (identical) return *first;  // exact for deterministic families, whatever the trial count
        for (auto* v : {&out.points, &out.lower, &out.upper})
            for (auto& x : *v) x /= static_cast<double>(k);
        return out;
    }
};

/// Builds the aggregate view of a list of trials. Throws exhaustion when every trial failed.
inline TrialEnsemble aggregate(const ModelConfig& config, std::vector<TrialRecord> trials) {
    if (trials.empty()) fail(ErrorKind::empty, "an ensemble needs at least one trial");
    TrialEnsemble e;
    e.config = config;
    std::vector<MetricsReport> train, validation, final_train, projection;
    for (const auto& t : trials) {
        e.seeds.push_back(t.seed);
        ++e.census[t.status];
        if (!t.ok()) continue;
        train.push_back(t.train);
        validation.push_back(t.validation);
        if (t.final_train) final_train.push_back(*t.final_train);
        if (t.projection) projection.push_back(*t.projection);
    }
    if (validation.empty()) {
        std::string msg = "all " + std::to_string(trials.size()) + " trials of " + config.label() + " failed:";
        for (const auto& [k, v] : e.census) msg += " " + k + "=" + std::to_string(v);
        if (!trials.front().message.empty()) msg += " (first: " + trials.front().message + ")";
        fail(ErrorKind::exhaustion, msg);
    }
    e.train = summarize(train);
    e.validation = summarize(validation);
    if (!final_train.empty()) e.final_train = summarize(final_train);
    if (!projection.empty()) e.projection = summarize(projection);
    e.per_trial = std::move(trials);
    return e;
}

namespace trials_detail {

/// Trials base_seed .. base_seed + n - 1 in slot order. SARIMA ignores the seed, so it is fitted once.
inline std::vector<TrialRecord> run_records(const ModelConfig& config, const DatasetSplit& split, std::size_t n_trials,
                                            std::uint64_t base_seed, const TrialOptions& opts) {
    if (n_trials < 1) fail(ErrorKind::config, "n_trials must be >= 1");
    config.validate();
    std::vector<TrialRecord> out(n_trials);
    if (config.family == Family::sarima) {
        const auto once = run_one(config, split, base_seed, opts);
        for (std::size_t t = 0; t < n_trials; ++t) {
            out[t] = once;
            out[t].seed = base_seed + t;
            if (opts.on_trial) opts.on_trial(t);
        }
        return out;
    }
    parallel_for(n_trials, opts.workers, [&](std::size_t t) {
        out[t] = run_one(config, split, base_seed + t, opts);
        if (opts.on_trial) opts.on_trial(t);
    });
    return out;
}

inline DatasetSplit as_dataset(const TuningSplit& s) { return {s.train, s.validation, {}}; }

}  // namespace trials_detail

/// Trial t trains with seed base_seed + t. With a projection segment each trial also refits and projects.
inline TrialEnsemble run_trials(const ModelConfig& config, const DatasetSplit& split, std::size_t n_trials,
                                std::uint64_t base_seed = 42, const TrialOptions& opts = {}) {
    return aggregate(config, trials_detail::run_records(config, split, n_trials, base_seed, opts));
}

inline TrialEnsemble run_trials(const ModelConfig& config, const TuningSplit& split, std::size_t n_trials,
                                std::uint64_t base_seed = 42, const TrialOptions& opts = {}) {
    return run_trials(config, trials_detail::as_dataset(split), n_trials, base_seed, opts);
}

// ---------------------------------------------------------------------------
// Grid search

struct LeaderboardEntry {
    std::size_t grid_index = 0;
    ModelConfig config;
    std::optional<MetricsSummary> validation;  ///< empty when every trial failed
    std::map<std::string, int> census;
};

struct GridSearchResult {
    ModelConfig best;
    std::vector<LeaderboardEntry> leaderboard;  ///< ranked, best first
};

/// Strict weak order for leaderboards: mean validation RMSE, then smaller lookback, batch, epochs, then grid order.
inline bool leaderboard_less(const LeaderboardEntry& a, const LeaderboardEntry& b) {
    if (a.validation.has_value() != b.validation.has_value()) return a.validation.has_value();
    if (a.validation && a.validation->rmse.mean != b.validation->rmse.mean)
        return a.validation->rmse.mean < b.validation->rmse.mean;
    if (a.config.lookback != b.config.lookback) return a.config.lookback < b.config.lookback;
    if (a.config.batch_size != b.config.batch_size) return a.config.batch_size < b.config.batch_size;
    if (a.config.epochs != b.config.epochs) return a.config.epochs < b.config.epochs;
    return a.grid_index < b.grid_index;
}

/// Runs every (configuration, trial) cell concurrently and ranks configurations by mean validation RMSE.
/// Only the masked split is accepted, so the projection segment cannot influence the result.
inline GridSearchResult grid_search_dl(const std::vector<ModelConfig>& grid, const TuningSplit& split,
                                       std::size_t trials_per_config = 30, std::uint64_t base_seed = 42,
                                       const TrialOptions& opts = {}) {
    if (grid.empty()) fail(ErrorKind::config, "empty hyperparameter grid");
    if (trials_per_config < 1) fail(ErrorKind::config, "trials_per_config must be >= 1");
    for (const auto& c : grid) {
        if (!is_neural(c.family)) fail(ErrorKind::config, "grid_search_dl takes neural configurations only");
        c.validate();
    }
    const auto data = trials_detail::as_dataset(split);
    const std::size_t n = trials_per_config;
    std::vector<TrialRecord> cells(grid.size() * n);
    parallel_for(cells.size(), opts.workers, [&](std::size_t k) {
        cells[k] = trials_detail::run_one(grid[k / n], data, base_seed + k % n, opts);
    });

    GridSearchResult out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        LeaderboardEntry entry;
        entry.grid_index = i;
        entry.config = grid[i];
        std::vector<MetricsReport> val;
        for (std::size_t t = 0; t < n; ++t) {
            const auto& rec = cells[i * n + t];
            ++entry.census[rec.status];
            if (rec.ok()) val.push_back(rec.validation);
        }
        if (!val.empty()) entry.validation = summarize(val);
        out.leaderboard.push_back(std::move(entry));
    }
    std::sort(out.leaderboard.begin(), out.leaderboard.end(), leaderboard_less);
    if (!out.leaderboard.front().validation)
        fail(ErrorKind::exhaustion, "every trial of all " + std::to_string(grid.size()) + " configurations failed");
    out.best = out.leaderboard.front().config;
    return out;
}

inline GridSearchResult grid_search_dl(Family family, const TuningSplit& split, std::size_t trials_per_config = 30,
                                       std::uint64_t base_seed = 42, const TrialOptions& opts = {}) {
    return grid_search_dl(full_grid(family), split, trials_per_config, base_seed, opts);
}

// ---------------------------------------------------------------------------
// Convergence

inline constexpr std::array<std::size_t, 10> kConvergenceCounts{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};

struct ConvergencePoint {
    std::size_t trials = 0;  ///< requested trial count N
    Summary summary;         ///< over the successful trials among the first N
    double ci_width = 0.0;   ///< 1.96 sd / sqrt(summary.n)
    bool criterion = false;  ///< both convergence conditions hold at this N
};

struct MetricCurve {
    std::string metric;
    std::vector<ConvergencePoint> points;
    bool gated = true;  ///< counts toward the overall flag (coverage is report-only)

    bool converged() const { return !points.empty() && points.back().criterion; }
    std::optional<std::size_t> first_converged() const {
        for (const auto& p : points)
            if (p.criterion) return p.trials;
        return std::nullopt;
    }
};

struct ConvergenceCurve {
    ModelConfig config;
    std::uint64_t base_seed = 42;
    std::vector<std::size_t> counts;
    std::vector<MetricCurve> metrics;  ///< rmse, mae, mape, pi_coverage
    std::vector<TrialRecord> trials;   ///< max(counts) trials, computed once

    bool converged() const {
        return std::all_of(metrics.begin(), metrics.end(), [](const MetricCurve& m) { return !m.gated || m.converged(); });
    }
    const MetricCurve& metric(const std::string& name) const {
        for (const auto& m : metrics)
            if (m.metric == name) return m;
        fail(ErrorKind::not_found, "no convergence curve for '" + name + "'");
    }
};

inline constexpr double kCiRelativeLimit = 0.05;
inline constexpr double kMeanChangeLimit = 0.01;

/// Validation metrics over growing trial prefixes. Trial t is computed once and reused by every prefix.
inline ConvergenceCurve convergence(const ModelConfig& config, const TuningSplit& split,
                                    std::span<const std::size_t> counts = kConvergenceCounts,
                                    std::uint64_t base_seed = 42, const TrialOptions& opts = {}) {
    if (counts.empty()) fail(ErrorKind::config, "no trial counts given");
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 1) fail(ErrorKind::config, "trial counts must be >= 1");
        if (i && counts[i] <= counts[i - 1]) fail(ErrorKind::config, "trial counts must be strictly ascending");
    }
    ConvergenceCurve out;
    out.config = config;
    out.base_seed = base_seed;
    out.counts.assign(counts.begin(), counts.end());
    out.trials = trials_detail::run_records(config, trials_detail::as_dataset(split), counts.back(), base_seed, opts);

    const std::array<std::pair<const char*, double MetricsReport::*>, 4> fields{{{"rmse", &MetricsReport::rmse},
                                                                                {"mae", &MetricsReport::mae},
                                                                                {"mape", &MetricsReport::mape},
                                                                                {"pi_coverage", &MetricsReport::pi_coverage}}};
    for (const auto& [name, field] : fields) {
        MetricCurve curve;
        curve.metric = name;
        curve.gated = std::string(name) != "pi_coverage";
        for (std::size_t k = 0; k < counts.size(); ++k) {
            std::vector<double> xs;
            for (std::size_t t = 0; t < counts[k]; ++t)
                if (out.trials[t].ok()) xs.push_back(out.trials[t].validation.*field);
            if (xs.empty()) fail(ErrorKind::exhaustion, "all of the first " + std::to_string(counts[k]) + " trials failed");
            ConvergencePoint p;
            p.trials = counts[k];
            p.summary = summarize(xs);
            p.ci_width = ci_width(p.summary.sd, p.summary.n);
            const double m = p.summary.mean;
            const bool narrow = p.ci_width == 0.0 || p.ci_width < kCiRelativeLimit * std::abs(m);
            bool stable = true;
            if (k > 0) {
                const double prev = curve.points.back().summary.mean;
                stable = m == prev || std::abs(m - prev) < kMeanChangeLimit * std::abs(prev);
            }
            p.criterion = narrow && stable;
            curve.points.push_back(p);
        }
        out.metrics.push_back(std::move(curve));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-seed stability

inline constexpr std::array<std::uint64_t, 5> kPaperSeeds{42, 123, 456, 789, 2024};

struct CrossSeedResult {
    std::vector<std::uint64_t> base_seeds;
    std::vector<TrialEnsemble> per_seed;
    Summary mean_of_means;  ///< across per-seed mean validation RMSE
    Summary mean_of_sds;    ///< across per-seed validation RMSE sd
};

/// Per-seed summaries of validation RMSE, reduced to an overall mean +- sd row.
inline CrossSeedResult summarize_seeds(std::vector<TrialEnsemble> per_seed) {
    if (per_seed.size() < 2) fail(ErrorKind::config, "cross-seed analysis needs at least 2 base seeds");
    CrossSeedResult out;
    std::vector<double> means, sds;
    for (const auto& e : per_seed) {
        out.base_seeds.push_back(e.seeds.front());
        means.push_back(e.validation.rmse.mean);
        sds.push_back(e.validation.rmse.sd);
    }
    out.mean_of_means = summarize(means);
    out.mean_of_sds = summarize(sds);
    out.per_seed = std::move(per_seed);
    return out;
}

inline CrossSeedResult cross_seed(const ModelConfig& config, const TuningSplit& split,
                                  std::span<const std::uint64_t> base_seeds = kPaperSeeds, std::size_t trials_each = 30,
                                  const TrialOptions& opts = {}) {
    if (base_seeds.size() < 2) fail(ErrorKind::config, "cross-seed analysis needs at least 2 base seeds");
    std::vector<TrialEnsemble> per_seed;
    for (std::uint64_t s : base_seeds) per_seed.push_back(run_trials(config, split, trials_each, s, opts));
    return summarize_seeds(std::move(per_seed));
}

// ---------------------------------------------------------------------------
// Stratified runs

struct StratumResult {
    Stratum stratum;
    std::string label;
    std::map<Family, TrialEnsemble> ensembles;
};

struct StratifiedResult {
    std::vector<std::string> dimensions;
    std::vector<StratumResult> strata;          ///< sorted by stratum
    std::map<std::string, std::string> skipped;  ///< stratum label -> reason
};

/// Distinct combinations of the chosen dimensions present in the dataset, sorted.
inline std::vector<Stratum> strata_of(const StratifiedDataset& dataset, const std::vector<std::string>& dimensions) {
    for (const auto& d : dimensions)
        if (std::find(dataset.dimensions.begin(), dataset.dimensions.end(), d) == dataset.dimensions.end())
            fail(ErrorKind::schema, "dataset has no dimension '" + d + "'");
    std::set<Stratum> seen;
    for (const auto& r : dataset.records) {
        Stratum s;
        for (const auto& d : dimensions) s[d] = r.stratum.at(d);
        seen.insert(std::move(s));
    }
    return {seen.begin(), seen.end()};
}

/// One independent univariate pipeline per stratum and family. Strata whose series cannot
/// be built or split (gaps, suppression, short coverage) are skipped and listed.
inline StratifiedResult run_stratified(const StratifiedDataset& dataset, const std::vector<std::string>& dimensions,
                                       const std::vector<ModelConfig>& configs, const SplitSpec& spec,
                                       std::size_t n_trials = 100, std::uint64_t base_seed = 42,
                                       const TrialOptions& opts = {}) {
    if (configs.empty()) fail(ErrorKind::config, "no model configurations given");
    spec.validate();
    StratifiedResult out;
    out.dimensions = dimensions;
    for (const auto& s : strata_of(dataset, dimensions)) {
        const std::string label = detail::stratum_label(s);
        std::optional<DatasetSplit> parts;
        try {
            parts = split(to_series(dataset, s), spec);
        } catch (const Error& e) {
            out.skipped[label] = e.what();
            continue;
        }
        StratumResult res;
        res.stratum = s;
        res.label = label;
        try {
            for (const auto& c : configs) res.ensembles.emplace(c.family, run_trials(c, *parts, n_trials, base_seed, opts));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::exhaustion) throw;
            out.skipped[label] = e.what();
            continue;
        }
        out.strata.push_back(std::move(res));
    }
    return out;
}

/// Per-family metrics pooled over every successful trial of every stratum.
/// Uses the projection period when present, else validation.
inline std::map<Family, MetricsSummary> pooled_by_family(const StratifiedResult& result) {
    std::map<Family, std::vector<MetricsReport>> pool;
    for (const auto& s : result.strata)
        for (const auto& [family, e] : s.ensembles)
            for (const auto& t : e.per_trial) {
                if (!t.ok()) continue;
                pool[family].push_back(t.projection ? *t.projection : t.validation);
            }
    std::map<Family, MetricsSummary> out;
    for (const auto& [family, reports] : pool) out.emplace(family, summarize(reports));
    return out;
}

}  // namespace cfmort
