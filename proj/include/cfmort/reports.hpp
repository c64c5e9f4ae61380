#pragma once

#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cfmort/evalkit.hpp"
#include "cfmort/format.hpp"
#include "cfmort/ingest.hpp"
#include "cfmort/model_config.hpp"
#include "cfmort/sarima.hpp"
#include "cfmort/series.hpp"
#include "cfmort/trials.hpp"

// CSV writers. Artifact files carry full precision; the paper-shaped tables
// ("tableN") use two decimals and "mean ± sd" cells.

namespace cfmort {

/// One family's final ensemble, as reported.
struct FamilyEnsemble {
    Family family;
    TrialEnsemble ensemble;
};

inline std::string fixed2(double x) { return format_fixed(x, 2); }

inline std::string pm(const Summary& s) { return fixed2(s.mean) + " ± " + fixed2(s.sd); }

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string join_csv(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ",";
        line += csv_quote(cells[i]);
    }
    return line + "\n";
}

inline std::string period_label(const MonthRange& r, const char* name) {
    const int a = r.start.year, b = r.end.year;
    return std::string(name) + " (" + std::to_string(a) + (a == b ? "" : "-" + std::to_string(b)) + ")";
}

// --- artifacts -------------------------------------------------------------

/// Same `year,month,deaths` layout that ingest reads back.
inline std::string series_csv(const MonthlySeries& s) { return write_series_csv(s); }

inline std::string projection_csv(const ProjectionResult& r) {
    std::string out = "year,month,point,lower,upper\n";
    for (std::size_t i = 0; i < r.size(); ++i) {
        const auto m = r.month_at(i);
        out += std::to_string(m.year) + "," + std::to_string(m.month) + "," + format_exact(r.points[i]) + "," +
               format_exact(r.lower[i]) + "," + format_exact(r.upper[i]) + "\n";
    }
    return out;
}

inline std::string excess_csv(const ExcessReport& e) {
    std::string out = "month,observed,counterfactual,delta\n";
    for (const auto& m : e.monthly)
        out += m.month.iso() + "," + format_exact(m.observed) + "," + format_exact(m.counterfactual) + "," +
               format_exact(m.delta) + "\n";
    return out;
}

/// Sliding windows in raw units; `first_target` is the calendar month of targets[0].
inline std::string windows_csv(const WindowSet& w, YearMonth first_target) {
    std::string out = "target_month";
    for (std::size_t j = 1; j <= w.lookback; ++j) out += ",x" + std::to_string(j);
    out += ",target\n";
    for (std::size_t i = 0; i < w.size(); ++i) {
        out += first_target.plus(static_cast<int>(i)).iso();
        for (double x : w.inputs[i]) out += "," + format_exact(x);
        out += "," + format_exact(w.targets[i]) + "\n";
    }
    return out;
}

/// Per-family means by period.
inline std::string metrics_csv(const std::vector<FamilyEnsemble>& runs) {
    std::string out = "model,period,rmse,mae,mape,pi_coverage\n";
    auto row = [&](Family f, const char* period, const MetricsSummary& m) {
        out += std::string(to_string(f)) + "," + period + "," + format_exact(m.rmse.mean) + "," +
               format_exact(m.mae.mean) + "," + format_exact(m.mape.mean) + "," + format_exact(m.pi_coverage.mean) + "\n";
    };
    for (const auto& r : runs) {
        row(r.family, "train", r.ensemble.train);
        row(r.family, "validation", r.ensemble.validation);
        if (r.ensemble.final_train) row(r.family, "final_train", *r.ensemble.final_train);
        if (r.ensemble.projection) row(r.family, "projection", *r.ensemble.projection);
    }
    return out;
}

/// Every trial, failures included.
inline std::string trials_csv(const std::vector<FamilyEnsemble>& runs) {
    std::string out = "model,trial,seed,status,period,rmse,mae,mape,pi_coverage,pi_width\n";
    for (const auto& r : runs) {
        for (std::size_t t = 0; t < r.ensemble.per_trial.size(); ++t) {
            const auto& rec = r.ensemble.per_trial[t];
            const std::string head =
                std::string(to_string(r.family)) + "," + std::to_string(t) + "," + std::to_string(rec.seed) + "," + rec.status;
            if (!rec.ok()) {
                out += head + ",,,,,,\n";
                continue;
            }
            auto row = [&](const char* period, const MetricsReport& m) {
                out += head + "," + period + "," + format_exact(m.rmse) + "," + format_exact(m.mae) + "," +
                       format_exact(m.mape) + "," + format_exact(m.pi_coverage) + "," + format_exact(m.pi_width) + "\n";
            };
            row("train", rec.train);
            row("validation", rec.validation);
            if (rec.final_train) row("final_train", *rec.final_train);
            if (rec.projection) row("projection", *rec.projection);
        }
    }
    return out;
}

inline std::string leaderboard_csv(const GridSearchResult& r) {
    std::string out =
        "rank,grid_index,label,lookback,batch_size,epochs,hidden,encoder_hidden,decoder_hidden,d_model,heads,"
        "trials_ok,trials_failed,val_rmse_mean,val_rmse_sd,val_mae_mean,val_mape_mean,val_pi_coverage_mean\n";
    for (std::size_t i = 0; i < r.leaderboard.size(); ++i) {
        const auto& e = r.leaderboard[i];
        const auto& c = e.config;
        int ok = 0, failed = 0;
        for (const auto& [k, v] : e.census) (k == "ok" ? ok : failed) += v;
        out += std::to_string(i + 1) + "," + std::to_string(e.grid_index) + "," + c.label() + "," +
               std::to_string(c.lookback) + "," + std::to_string(c.batch_size) + "," + std::to_string(c.epochs) + "," +
               std::to_string(c.hidden) + "," + std::to_string(c.encoder_hidden) + "," +
               std::to_string(c.decoder_hidden) + "," + std::to_string(c.d_model) + "," + std::to_string(c.heads) + "," +
               std::to_string(ok) + "," + std::to_string(failed) + ",";
        if (e.validation) {
            const auto& v = *e.validation;
            out += format_exact(v.rmse.mean) + "," + format_exact(v.rmse.sd) + "," + format_exact(v.mae.mean) + "," +
                   format_exact(v.mape.mean) + "," + format_exact(v.pi_coverage.mean);
        } else {
            out += ",,,,";
        }
        out += "\n";
    }
    return out;
}

/// One row per trial count; `converged` is the joint criterion of the gated metrics at that count.
inline std::string convergence_csv(const ConvergenceCurve& c) {
    std::string out = "trials,n_ok";
    for (const auto& m : c.metrics) out += "," + m.metric + "_mean," + m.metric + "_sd," + m.metric + "_ci_width";
    out += ",converged\n";
    for (std::size_t k = 0; k < c.counts.size(); ++k) {
        out += std::to_string(c.counts[k]) + "," + std::to_string(c.metrics.front().points[k].summary.n);
        bool all = true;
        for (const auto& m : c.metrics) {
            const auto& p = m.points[k];
            out += "," + format_exact(p.summary.mean) + "," + format_exact(p.summary.sd) + "," + format_exact(p.ci_width);
            if (m.gated) all = all && p.criterion;
        }
        out += std::string(",") + (all ? "1" : "0") + "\n";
    }
    return out;
}

// --- paper-shaped tables -----------------------------------------------------

inline std::string table1_notes(const ModelConfig& c) {
    switch (c.family) {
        case Family::sarima: return c.order.to_string();
        case Family::lstm: return std::to_string(c.lstm_layers) + "-layer LSTM with ReLU activation";
        case Family::seq2seq:
            return "GRU " + std::to_string(c.encoder_hidden) + " encoder - " + std::to_string(c.decoder_hidden) +
                   " decoder without attention";
        case Family::seq2seq_attn:
            return "GRU " + std::to_string(c.encoder_hidden) + " encoder - " + std::to_string(c.decoder_hidden) +
                   " decoder with Bahdanau attention";
        case Family::transformer:
            return "d=" + std::to_string(c.d_model) + ", " + std::to_string(c.heads) +
                   "-head self-attention, positional encodings";
    }
    return {};
}

/// Selected configuration per family.
inline std::string table1_csv(const std::vector<ModelConfig>& selected) {
    std::string out = "Model,Lookback,Batch Size,Epochs,Notes\n";
    for (const auto& c : selected) {
        if (c.family == Family::sarima) {
            out += join_csv({display_name(c.family), "---", "---", "---", table1_notes(c)});
        } else {
            out += join_csv({display_name(c.family), std::to_string(c.lookback), std::to_string(c.batch_size),
                             std::to_string(c.epochs), table1_notes(c)});
        }
    }
    return out;
}

/// Two-period table: Training/Validation (stage 1) or Training/Projection (stage 2).
inline std::string two_period_table_csv(const std::vector<FamilyEnsemble>& runs, const std::string& first,
                                        const std::string& second, bool final_stage) {
    std::vector<std::string> header{"Model"};
    for (const auto& p : {first, second})
        for (const char* m : {"RMSE", "MAE", "MAPE (%)", "PI Cov. (%)"}) header.push_back(p + " " + m);
    std::string out = join_csv(header);
    for (const auto& r : runs) {
        const auto& e = r.ensemble;
        const MetricsSummary* a = final_stage ? (e.final_train ? &*e.final_train : nullptr) : &e.train;
        const MetricsSummary* b = final_stage ? (e.projection ? &*e.projection : nullptr) : &e.validation;
        if (!a || !b) continue;
        std::vector<std::string> row{display_name(r.family)};
        for (const auto* m : {a, b}) {
            row.push_back(pm(m->rmse));
            row.push_back(pm(m->mae));
            row.push_back(pm(m->mape));
            row.push_back(fixed2(m->pi_coverage.mean));
        }
        out += join_csv(row);
    }
    return out;
}

/// Stratified summary: one row per family under a variable label such as "age+sex".
inline std::string table4_csv(const std::vector<std::pair<std::string, std::map<Family, MetricsSummary>>>& blocks) {
    std::string out = "Variable,Model,RMSE,MAE,MAPE (%),PI Cov. (%)\n";
    for (const auto& [variable, pooled] : blocks)
        for (const auto& [family, m] : pooled)
            out += join_csv({variable, display_name(family), pm(m.rmse), pm(m.mae), pm(m.mape), pm(m.pi_coverage)});
    return out;
}

inline std::string table5_csv(const CrossSeedResult& r) {
    std::string out = "Random Seed,Mean RMSE,Std Dev\n";
    for (const auto& e : r.per_seed)
        out += std::to_string(e.seeds.front()) + "," + fixed2(e.validation.rmse.mean) + "," + fixed2(e.validation.rmse.sd) + "\n";
    out += join_csv({"Overall", pm(r.mean_of_means), pm(r.mean_of_sds)});
    return out;
}

/// Single-period projection summary.
inline std::string projection_table_csv(const std::vector<FamilyEnsemble>& runs) {
    std::string out = "Model,RMSE,MAE,MAPE (%),PI Cov. (%)\n";
    for (const auto& r : runs) {
        if (!r.ensemble.projection) continue;
        const auto& m = *r.ensemble.projection;
        out += join_csv({display_name(r.family), pm(m.rmse), pm(m.mae), pm(m.mape), pm(m.pi_coverage)});
    }
    return out;
}

struct HorizonRow {
    Family family;
    std::string horizon;  ///< calendar span such as "2020-2021"
    int months = 0;
    Summary rmse, mae, mape;
    double rmse_median = 0.0, mae_median = 0.0, mape_median = 0.0;
};

/// Metrics over the first k projection months for every successful trial, summarized per k.
inline std::vector<HorizonRow> horizon_rows(const std::vector<FamilyEnsemble>& runs, const MonthlySeries& observed,
                                            std::span<const int> horizons = kDefaultHorizons) {
    std::vector<HorizonRow> out;
    for (const auto& r : runs) {
        std::map<int, std::vector<MetricsReport>> by_h;
        YearMonth start{};
        for (const auto& t : r.ensemble.per_trial) {
            if (!t.ok() || !t.projection) continue;
            start = t.projection_path.start;
            const auto obs = aligned_observations(observed, t.projection_path);
            for (const auto& [k, m] : horizon_slices(obs, t.projection_path, horizons)) by_h[k].push_back(m);
        }
        for (int k : horizons) {
            const auto it = by_h.find(k);
            if (it == by_h.end()) continue;
            std::vector<double> rm, ma, mp;
            for (const auto& m : it->second) rm.push_back(m.rmse), ma.push_back(m.mae), mp.push_back(m.mape);
            HorizonRow row{r.family, {}, k, summarize(rm), summarize(ma), summarize(mp), median(rm), median(ma), median(mp)};
            const int y0 = start.year, y1 = start.plus(k - 1).year;
            row.horizon = std::to_string(y0) + (y1 == y0 ? "" : "-" + std::to_string(y1));
            out.push_back(row);
        }
    }
    return out;
}

inline std::string table7_csv(const std::vector<HorizonRow>& rows) {
    auto cell = [](const Summary& s, double med) { return pm(s) + " (" + fixed2(med) + ")"; };
    std::string out = "Model,Horizon,Months,RMSE,MAE,MAPE\n";
    for (const auto& r : rows)
        out += join_csv({display_name(r.family), r.horizon, std::to_string(r.months), cell(r.rmse, r.rmse_median),
                         cell(r.mae, r.mae_median), cell(r.mape, r.mape_median)});
    return out;
}

}  // namespace cfmort
