#pragma once

#include <cmath>
#include <string>

#include <json.hpp>

#include "cfmort/calendar.hpp"
#include "cfmort/evalkit.hpp"
#include "cfmort/forecasters.hpp"
#include "cfmort/nn/params.hpp"
#include "cfmort/trials.hpp"

namespace cfmort {

using nlohmann::json;

inline json to_json(const MetricsReport& m) {
    return {{"rmse", m.rmse}, {"mae", m.mae},           {"mape", m.mape},
            {"pi_coverage", m.pi_coverage}, {"pi_width", m.pi_width}, {"n", m.n}};
}

inline json to_json(const Summary& s) { return {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}}; }

inline json to_json(const MetricsSummary& m) {
    return {{"rmse", to_json(m.rmse)},
            {"mae", to_json(m.mae)},
            {"mape", to_json(m.mape)},
            {"pi_coverage", to_json(m.pi_coverage)},
            {"pi_width", to_json(m.pi_width)}};
}

inline json to_json(const ProjectionResult& r) {
    json months = json::array();
    for (std::size_t i = 0; i < r.size(); ++i) months.push_back(r.month_at(i).iso());
    return {{"start", r.start.iso()}, {"level", r.level},   {"months", months},
            {"points", r.points},     {"lower", r.lower},   {"upper", r.upper}};
}

inline ProjectionResult projection_from_json(const json& j) {
    try {
        ProjectionResult r;
        r.start = parse_iso_month(j.at("start").get<std::string>());
        r.level = j.value("level", 0.95);
        r.points = j.at("points").get<std::vector<double>>();
        r.lower = j.at("lower").get<std::vector<double>>();
        r.upper = j.at("upper").get<std::vector<double>>();
        if (r.lower.size() != r.size() || r.upper.size() != r.size())
            fail(ErrorKind::schema, "projection arrays differ in length");
        return r;
    } catch (const json::exception& e) {
        fail(ErrorKind::schema, std::string("projection: ") + e.what());
    }
}

/// Exactly the ExcessReport fields.
inline json to_json(const ExcessReport& e) {
    json monthly = json::array();
    for (const auto& m : e.monthly)
        monthly.push_back({{"month", m.month.iso()}, {"observed", m.observed}, {"counterfactual", m.counterfactual},
                           {"delta", m.delta}});
    return {{"monthly", monthly}, {"cumulative", e.cumulative}, {"share_outside_pi", e.share_outside_pi}};
}

inline ExcessReport excess_from_json(const json& j) {
    try {
        ExcessReport e;
        for (const auto& m : j.at("monthly"))
            e.monthly.push_back({parse_iso_month(m.at("month").get<std::string>()), m.at("observed").get<double>(),
                                 m.at("counterfactual").get<double>(), m.at("delta").get<double>()});
        e.cumulative = j.at("cumulative").get<double>();
        e.share_outside_pi = j.at("share_outside_pi").get<double>();
        return e;
    } catch (const json::exception& e) {
        fail(ErrorKind::schema, std::string("excess report: ") + e.what());
    }
}

inline json to_json(const MonthlySeries& s) {
    json months = json::array();
    for (std::size_t i = 0; i < s.size(); ++i) months.push_back(s.month_at(i).iso());
    return {{"start", s.empty() ? "" : s.start().iso()}, {"months", months}, {"values", s.values()}};
}

/// Self-describing checkpoint of a trained model.
inline json model_to_json(const TrainedModel& m) {
    json j{{"format", "cfmort-model-v1"},
           {"config", to_json(m.config)},
           {"seed", m.seed},
           {"train_end", m.train_end.iso()}};
    if (m.sarima) {
        const auto& s = *m.sarima;
        j["sarima"] = {{"phi", s.phi},
                       {"theta", s.theta},
                       {"seasonal_phi", s.seasonal_phi},
                       {"seasonal_theta", s.seasonal_theta},
                       {"mean", s.mean},
                       {"sigma2", s.sigma2},
                       {"css", s.css},
                       {"n_effective", s.n_effective}};
    } else {
        j["scaler"] = {{"min", m.scaler.min}, {"max", m.scaler.max}};
        j["params"] = nn::params_to_json(m.params);
    }
    return j;
}

/// Rounds every floating-point number to `decimals` places, recursively.
inline void round_numbers(json& j, int decimals = 6) {
    const double scale = std::pow(10.0, decimals);
    if (j.is_number_float()) {
        const double x = j.get<double>();
        if (std::isfinite(x)) {
            double r = std::round(x * scale) / scale;
            if (r == 0.0) r = 0.0;  // drop negative zero
            j = r;
        }
    } else if (j.is_array() || j.is_object()) {
        for (auto& v : j) round_numbers(v, decimals);
    }
}

inline json rounded(json j, int decimals = 6) {
    round_numbers(j, decimals);
    return j;
}

}  // namespace cfmort
