#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfmort/evalkit.hpp"
#include "cfmort/forecasters.hpp"
#include "cfmort/reports.hpp"
#include "cfmort/run_config.hpp"
#include "cfmort/rundir.hpp"
#include "cfmort/sarima.hpp"
#include "cfmort/serialize.hpp"
#include "cfmort/trials.hpp"

// Orchestration of the three-stage protocol: tune on train/validation (masked
// split), retrain the winners on train+validation and project, then report.
// Every command writes into its own content-addressed run directory.

namespace cfmort {

using ProgressFn = std::function<void(const std::string&)>;

struct PipelineOptions {
    std::size_t workers = 1;
    ProgressFn progress;
};

struct FamilyOutcome {
    Family family;
    ModelConfig selected;
    TrialEnsemble ensemble;
    std::optional<ProjectionResult> mean_projection;
    std::optional<ExcessReport> excess;
};

struct PipelineResult {
    std::string run_id;
    fs::path dir;
    std::vector<FamilyOutcome> outcomes;

    const FamilyOutcome& outcome(Family f) const {
        for (const auto& o : outcomes)
            if (o.family == f) return o;
        fail(ErrorKind::not_found, std::string("no outcome for ") + to_string(f));
    }
};

/// "<kind>-<hash>" over the canonical run configuration and the observed data.
inline std::string run_id_for(const std::string& kind, const RunConfig& rc, const MonthlySeries& series) {
    return kind + "-" + content_hash(to_json(rc).dump() + "\n" + series_csv(series));
}

namespace pipeline_detail {

inline void note(const PipelineOptions& o, const std::string& msg) {
    if (o.progress) o.progress(msg);
}

inline TrialOptions trial_options(const RunConfig& rc, const PipelineOptions& o) {
    TrialOptions t;
    t.workers = o.workers;
    t.held_back_residuals = rc.held_back_residuals;
    return t;
}

inline nlohmann::json index_entry(const std::string& id, const std::string& kind, const RunConfig& rc,
                                  const MonthlySeries& series) {
    nlohmann::json families = nlohmann::json::array();
    for (Family f : rc.families) families.push_back(to_string(f));
    nlohmann::json e{{"id", id},
                     {"kind", kind},
                     {"path", id},
                     {"families", families},
                     {"series", {{"start", series.start().iso()}, {"end", series.end().iso()}, {"months", series.size()}}},
                     {"base_seed", rc.base_seed},
                     {"trials", rc.trials}};
    e["projection"] = rc.split.projection ? nlohmann::json{{"start", rc.split.projection->start.iso()},
                                                           {"end", rc.split.projection->end.iso()}}
                                          : nlohmann::json(nullptr);
    return e;
}

/// Runs `body` and always leaves a manifest; failures mark it partial and propagate.
template <typename Body>
void with_manifest(ArtifactWriter& w, const std::string& id, Body&& body) {
    std::string stage = "start";
    try {
        body(stage);
    } catch (const std::exception& e) {
        w.write_manifest(id, "partial", {{"failed_stage", stage}, {"error", e.what()}});
        throw;
    }
    w.write_manifest(id, "complete");
}

/// Stage 1. Sees only the masked split.
inline ModelConfig select_config(Family f, const RunConfig& rc, const TuningSplit& tuning, ArtifactWriter& w,
                                 const PipelineOptions& o) {
    if (!rc.tune) return rc.config_for(f);
    if (f == Family::sarima) {
        SarimaGridOptions g;
        if (!rc.sarima_orders.empty()) g.orders = rc.sarima_orders;
        g.workers = o.workers;
        note(o, "stage 1: sarima grid (" + std::to_string(g.orders.size()) + " orders)");
        const auto r = grid_search_sarima(tuning, g);
        w.write("tuning/sarima_leaderboard.csv", sarima_leaderboard_csv(r.leaderboard));
        ModelConfig c = rc.config_for(Family::sarima);
        c.order = r.best_order;
        return c;
    }
    const auto it = rc.grids.find(f);
    const auto grid = it == rc.grids.end() ? full_grid(f) : it->second;
    note(o, std::string("stage 1: ") + to_string(f) + " grid (" + std::to_string(grid.size()) + " configs x " +
                std::to_string(rc.tuning_trials) + " trials)");
    const auto r = grid_search_dl(grid, tuning, rc.tuning_trials, rc.base_seed, trial_options(rc, o));
    w.write(std::string("tuning/") + to_string(f) + "_leaderboard.csv", leaderboard_csv(r));
    return r.best;
}

/// Stage-1 (train/validation) trial rows only, so the file is a pure tuning artifact.
inline std::string stage_one_csv(const std::vector<FamilyEnsemble>& runs) {
    std::string out = "model,trial,seed,status,period,rmse,mae,mape,pi_coverage,pi_width,radius\n";
    for (const auto& r : runs)
        for (std::size_t t = 0; t < r.ensemble.per_trial.size(); ++t) {
            const auto& rec = r.ensemble.per_trial[t];
            const std::string head =
                std::string(to_string(r.family)) + "," + std::to_string(t) + "," + std::to_string(rec.seed) + "," + rec.status;
            if (!rec.ok()) {
                out += head + ",,,,,,,\n";
                continue;
            }
            for (const auto& [period, m] : {std::pair<const char*, const MetricsReport*>{"train", &rec.train},
                                            {"validation", &rec.validation}})
                out += head + "," + period + "," + format_exact(m->rmse) + "," + format_exact(m->mae) + "," +
                       format_exact(m->mape) + "," + format_exact(m->pi_coverage) + "," + format_exact(m->pi_width) +
                       "," + format_exact(rec.radius) + "\n";
        }
    return out;
}

inline std::string variable_label(const std::vector<std::string>& dims) {
    std::string out;
    for (auto d : dims) {
        if (!d.empty()) d[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(d[0])));
        out += (out.empty() ? "" : " + ") + d;
    }
    return out.empty() ? "National" : out;
}

}  // namespace pipeline_detail

/// Tune, retrain, project and report for every requested family.
inline PipelineResult run_pipeline(const RunConfig& rc, const MonthlySeries& series, const fs::path& out_root,
                                   const PipelineOptions& opts = {}) {
    using namespace pipeline_detail;
    rc.validate();
    const auto data = split(series, rc.split);
    const TuningSplit tuning = data.masked();

    PipelineResult result;
    result.run_id = run_id_for("pipeline", rc, series);
    result.dir = out_root / result.run_id;
    ArtifactWriter w(result.dir);
    w.write_json("run_config.json", to_json(rc));
    w.write("series.csv", series_csv(series));

    with_manifest(w, result.run_id, [&](std::string& stage) {
        stage = "tuning";
        std::vector<ModelConfig> selected;
        for (Family f : rc.families) selected.push_back(select_config(f, rc, tuning, w, opts));
        nlohmann::json sel = nlohmann::json::object();
        for (const auto& c : selected) sel[to_string(c.family)] = to_json(c);
        w.write_json("tuning/selected.json", sel);
        w.write("tables/table1.csv", table1_csv(selected));

        stage = "final";
        auto topts = trial_options(rc, opts);
        topts.keep_models = true;
        std::vector<FamilyEnsemble> runs;
        for (const auto& c : selected) {
            note(opts, std::string("stage 2: ") + to_string(c.family) + " " + std::to_string(rc.trials) + " trials");
            runs.push_back({c.family, run_trials(c, data, rc.trials, rc.base_seed, topts)});
        }
        w.write("tuning/stage1_trials.csv", stage_one_csv(runs));

        stage = "report";
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& e = runs[i].ensemble;
            const std::string name = to_string(runs[i].family);
            FamilyOutcome out{runs[i].family, selected[i], e, std::nullopt, std::nullopt};
            for (const auto& t : e.per_trial)
                if (t.ok() && t.final_model) {
                    w.write_json("checkpoints/" + name + ".json", model_to_json(*t.final_model));
                    break;
                }
            if (is_neural(runs[i].family)) {
                const auto combined = data.train_and_validation();
                const auto L = static_cast<std::size_t>(selected[i].lookback);
                w.write("windows/" + name + ".csv",
                        windows_csv(make_windows(combined, L), combined.month_at(L)));
            }
            if (e.projection) {
                out.mean_projection = e.mean_projection();
                out.excess = excess(data.projection, *out.mean_projection);
                w.write("projections/" + name + ".csv", projection_csv(*out.mean_projection));
                w.write_json("projections/" + name + ".json", to_json(*out.mean_projection));
                w.write("excess/" + name + ".csv", excess_csv(*out.excess));
                w.write_json("excess/" + name + ".json", to_json(*out.excess));
            }
            result.outcomes.push_back(std::move(out));
        }
        for (auto& r : runs)
            for (auto& t : r.ensemble.per_trial) t.final_model.reset();
        for (auto& o : result.outcomes)
            for (auto& t : o.ensemble.per_trial) t.final_model.reset();

        w.write("metrics.csv", metrics_csv(runs));
        w.write("trials.csv", trials_csv(runs));
        w.write("tables/table2.csv", two_period_table_csv(runs, period_label(rc.split.train, "Training"),
                                                          period_label(rc.split.validation, "Validation"), false));
        if (rc.split.projection) {
            const MonthRange full{rc.split.train.start, rc.split.validation.end};
            w.write("tables/table3.csv", two_period_table_csv(runs, period_label(full, "Training"),
                                                              period_label(*rc.split.projection, "Projection"), true));
            w.write("tables/projection_summary.csv", projection_table_csv(runs));
            std::vector<int> hs;
            for (int h : rc.horizons)
                if (h <= rc.split.projection->length()) hs.push_back(h);
            if (!hs.empty()) w.write("tables/table7.csv", table7_csv(horizon_rows(runs, data.projection, hs)));
        }

        if (!rc.stratify.empty()) {
            stage = "stratified";
            const auto dataset = load_dataset(rc);
            std::vector<std::pair<std::string, std::map<Family, MetricsSummary>>> blocks;
            std::string skipped = "variable,stratum,reason\n";
            for (const auto& dims : rc.stratify) {
                note(opts, "stratified: " + variable_label(dims));
                const auto r = run_stratified(dataset, dims, selected, rc.split, rc.stratified_trials, rc.base_seed,
                                              trial_options(rc, opts));
                blocks.emplace_back(variable_label(dims), pooled_by_family(r));
                for (const auto& [label, reason] : r.skipped)
                    skipped += join_csv({variable_label(dims), label, reason});
            }
            w.write("tables/table4.csv", table4_csv(blocks));
            w.write("tables/strata_skipped.csv", skipped);
        }
    });
    upsert_run_index(out_root, index_entry(result.run_id, "pipeline", rc, series));
    return result;
}

inline PipelineResult run_pipeline(const RunConfig& rc, const fs::path& out_root, const PipelineOptions& opts = {}) {
    return run_pipeline(rc, load_series(rc), out_root, opts);
}

struct CommandResult {
    std::string run_id;
    fs::path dir;
};

/// Trial-count convergence of the configured family's validation metrics.
inline CommandResult run_convergence(const RunConfig& rc, const MonthlySeries& series, const fs::path& out_root,
                                     const PipelineOptions& opts = {}) {
    using namespace pipeline_detail;
    rc.validate();
    const auto tuning = split(series, rc.split).masked();
    CommandResult out{run_id_for("converge", rc, series), {}};
    out.dir = out_root / out.run_id;
    ArtifactWriter w(out.dir);
    w.write_json("run_config.json", to_json(rc));
    with_manifest(w, out.run_id, [&](std::string& stage) {
        stage = "convergence";
        const auto config = rc.config_for(rc.convergence_family);
        note(opts, "convergence: " + config.label());
        const auto curve = convergence(config, tuning, rc.convergence_counts, rc.base_seed, trial_options(rc, opts));
        w.write("convergence.csv", convergence_csv(curve));
        nlohmann::json summary{{"config", to_json(config)}, {"converged", curve.converged()}};
        for (const auto& m : curve.metrics) {
            const auto first = m.first_converged();
            summary["metrics"][m.metric] = {{"converged", m.converged()},
                                            {"gated", m.gated},
                                            {"first_converged", first ? nlohmann::json(*first) : nlohmann::json(nullptr)}};
        }
        w.write_json("convergence.json", summary);
    });
    upsert_run_index(out_root, index_entry(out.run_id, "converge", rc, series));
    return out;
}

/// Validation RMSE of the configured family under each base seed.
inline CommandResult run_cross_seed(const RunConfig& rc, const MonthlySeries& series, const fs::path& out_root,
                                    const PipelineOptions& opts = {}) {
    using namespace pipeline_detail;
    rc.validate();
    if (rc.cross_seeds.size() < 2) fail(ErrorKind::config, "cross-seed analysis needs at least 2 base seeds");
    const auto tuning = split(series, rc.split).masked();
    CommandResult out{run_id_for("crossseed", rc, series), {}};
    out.dir = out_root / out.run_id;
    ArtifactWriter w(out.dir);
    w.write_json("run_config.json", to_json(rc));
    with_manifest(w, out.run_id, [&](std::string& stage) {
        stage = "cross_seed";
        const auto config = rc.config_for(rc.cross_seed_family);
        const auto r = cross_seed(config, tuning, rc.cross_seeds, rc.cross_seed_trials, trial_options(rc, opts));
        w.write("tables/table5.csv", table5_csv(r));
        nlohmann::json per = nlohmann::json::array();
        for (const auto& e : r.per_seed)
            per.push_back({{"base_seed", e.seeds.front()}, {"validation", to_json(e.validation)}, {"census", e.census}});
        w.write_json("cross_seed.json", {{"config", to_json(config)},
                                         {"per_seed", per},
                                         {"overall", {{"mean_rmse", to_json(r.mean_of_means)},
                                                      {"sd_rmse", to_json(r.mean_of_sds)}}}});
    });
    upsert_run_index(out_root, index_entry(out.run_id, "crossseed", rc, series));
    return out;
}

/// Projection error over the first 12/24/36/48 months for the fixed configurations.
inline CommandResult run_horizons(const RunConfig& rc, const MonthlySeries& series, const fs::path& out_root,
                                  const PipelineOptions& opts = {}) {
    using namespace pipeline_detail;
    rc.validate();
    if (!rc.split.projection) fail(ErrorKind::config, "horizon analysis needs a projection segment");
    for (int h : rc.horizons)
        if (h > rc.split.projection->length())
            fail(ErrorKind::range, "horizon " + std::to_string(h) + " exceeds the projection segment");
    const auto data = split(series, rc.split);
    CommandResult out{run_id_for("horizons", rc, series), {}};
    out.dir = out_root / out.run_id;
    ArtifactWriter w(out.dir);
    w.write_json("run_config.json", to_json(rc));
    with_manifest(w, out.run_id, [&](std::string& stage) {
        stage = "horizons";
        std::vector<FamilyEnsemble> runs;
        for (Family f : rc.families) {
            note(opts, std::string("horizons: ") + to_string(f));
            runs.push_back({f, run_trials(rc.config_for(f), data, rc.trials, rc.base_seed, trial_options(rc, opts))});
        }
        const auto rows = horizon_rows(runs, data.projection, rc.horizons);
        w.write("tables/table7.csv", table7_csv(rows));
        std::string full = "model,horizon,months,rmse_mean,rmse_sd,rmse_median,mae_mean,mae_sd,mae_median,mape_mean,mape_sd,mape_median\n";
        for (const auto& r : rows)
            full += std::string(to_string(r.family)) + "," + r.horizon + "," + std::to_string(r.months) + "," +
                    format_exact(r.rmse.mean) + "," + format_exact(r.rmse.sd) + "," + format_exact(r.rmse_median) + "," +
                    format_exact(r.mae.mean) + "," + format_exact(r.mae.sd) + "," + format_exact(r.mae_median) + "," +
                    format_exact(r.mape.mean) + "," + format_exact(r.mape.sd) + "," + format_exact(r.mape_median) + "\n";
        w.write("horizons.csv", full);
    });
    upsert_run_index(out_root, index_entry(out.run_id, "horizons", rc, series));
    return out;
}

}  // namespace cfmort
