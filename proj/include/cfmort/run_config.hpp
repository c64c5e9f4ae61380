#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfmort/ingest.hpp"
#include "cfmort/model_config.hpp"
#include "cfmort/rundir.hpp"
#include "cfmort/sarima.hpp"
#include "cfmort/series.hpp"
#include "cfmort/trials.hpp"

namespace cfmort {

enum class DataKind { synthetic, series_csv, wonder_export };

struct DataSource {
    DataKind kind = DataKind::synthetic;
    std::string path;  ///< series CSV or WONDER export
    std::vector<std::string> dimensions;
    SuppressionMode suppression = SuppressionMode::fail;
    Stratum stratum;  ///< selects one stratum of an export; empty = national totals

    SyntheticSpec synthetic;
    std::uint64_t synthetic_seed = 1;
    std::optional<std::pair<YearMonth, double>> level_shift;
};

/// Everything a pipeline run needs; one JSON document on disk.
struct RunConfig {
    DataSource data;
    SplitSpec split;
    std::vector<Family> families{kAllFamilies.begin(), kAllFamilies.end()};

    bool tune = false;                                ///< grid search, or fixed configs
    std::size_t tuning_trials = 30;                   ///< per grid configuration
    std::vector<SarimaOrder> sarima_orders;           ///< empty = all 729
    std::map<Family, std::vector<ModelConfig>> grids;  ///< missing family = full grid
    std::map<Family, ModelConfig> configs;             ///< fixed configs; missing = published

    std::size_t trials = 30;  ///< final ensembles
    std::uint64_t base_seed = 42;
    bool held_back_residuals = false;
    std::vector<int> horizons{kDefaultHorizons.begin(), kDefaultHorizons.end()};

    Family convergence_family = Family::lstm;
    std::vector<std::size_t> convergence_counts{kConvergenceCounts.begin(), kConvergenceCounts.end()};
    Family cross_seed_family = Family::lstm;
    std::vector<std::uint64_t> cross_seeds{kPaperSeeds.begin(), kPaperSeeds.end()};
    std::size_t cross_seed_trials = 30;

    std::vector<std::vector<std::string>> stratify;  ///< dimension sets for stratified runs
    std::size_t stratified_trials = 100;

    ModelConfig config_for(Family f) const {
        const auto it = configs.find(f);
        return it == configs.end() ? published_config(f) : it->second;
    }

    void validate() const {
        split.validate();
        if (families.empty()) fail(ErrorKind::config, "no families selected");
        if (trials < 1 || tuning_trials < 1 || cross_seed_trials < 1 || stratified_trials < 1)
            fail(ErrorKind::config, "trial counts must be >= 1");
        for (const auto& [f, c] : configs) {
            if (c.family != f) fail(ErrorKind::config, std::string("configs.") + to_string(f) + " has another family");
            c.validate();
        }
        for (const auto& [f, grid] : grids) {
            if (!is_neural(f)) fail(ErrorKind::config, "sarima takes 'sarima_orders', not a grid");
            if (grid.empty()) fail(ErrorKind::config, std::string("empty grid for ") + to_string(f));
            for (const auto& c : grid) {
                if (c.family != f) fail(ErrorKind::config, std::string("grid entry of another family in ") + to_string(f));
                c.validate();
            }
        }
        for (const auto& o : sarima_orders) o.validate();
        for (int h : horizons)
            if (h < 1) fail(ErrorKind::config, "horizons must be >= 1");
        if (!stratify.empty() && data.kind != DataKind::wonder_export)
            fail(ErrorKind::config, "stratified runs need a WONDER export as data source");
        if (data.kind != DataKind::synthetic && data.path.empty()) fail(ErrorKind::config, "data.path is required");
    }
};

namespace run_config_detail {

inline nlohmann::json range_json(const MonthRange& r) { return {{"start", r.start.iso()}, {"end", r.end.iso()}}; }

inline MonthRange range_from(const nlohmann::json& j) {
    return {parse_iso_month(j.at("start").get<std::string>()), parse_iso_month(j.at("end").get<std::string>())};
}

inline const char* kind_name(DataKind k) {
    switch (k) {
        case DataKind::synthetic: return "synthetic";
        case DataKind::series_csv: return "series_csv";
        case DataKind::wonder_export: return "wonder_export";
    }
    return "";
}

inline const char* suppression_name(SuppressionMode m) {
    switch (m) {
        case SuppressionMode::fail: return "fail";
        case SuppressionMode::zero: return "zero";
        case SuppressionMode::midpoint: return "midpoint";
    }
    return "";
}

}  // namespace run_config_detail

inline nlohmann::json to_json(const RunConfig& rc) {
    using namespace run_config_detail;
    using nlohmann::json;
    json data{{"kind", kind_name(rc.data.kind)}};
    if (rc.data.kind == DataKind::synthetic) {
        const auto& s = rc.data.synthetic;
        data["synthetic"] = {{"start", s.start.iso()},     {"months", s.n_months},
                             {"base_level", s.base_level}, {"linear_slope", s.linear_slope},
                             {"seasonal", s.seasonal_amplitudes}, {"noise_sd", s.noise_sd}};
        data["seed"] = rc.data.synthetic_seed;
        if (rc.data.level_shift)
            data["level_shift"] = {{"from", rc.data.level_shift->first.iso()}, {"amount", rc.data.level_shift->second}};
    } else {
        data["path"] = rc.data.path;
    }
    if (rc.data.kind == DataKind::wonder_export) {
        data["dimensions"] = rc.data.dimensions;
        data["suppression"] = suppression_name(rc.data.suppression);
        data["stratum"] = rc.data.stratum;
    }

    json split{{"train", range_json(rc.split.train)}, {"validation", range_json(rc.split.validation)}};
    if (rc.split.projection) split["projection"] = range_json(*rc.split.projection);

    json families = json::array();
    for (Family f : rc.families) families.push_back(to_string(f));
    json orders = json::array();
    for (const auto& o : rc.sarima_orders) orders.push_back(to_json(o));
    json grids = json::object();
    for (const auto& [f, g] : rc.grids) {
        json list = json::array();
        for (const auto& c : g) list.push_back(to_json(c));
        grids[to_string(f)] = list;
    }
    json configs = json::object();
    for (const auto& [f, c] : rc.configs) configs[to_string(f)] = to_json(c);
    json stratify = rc.stratify;

    return {{"data", data},
            {"split", split},
            {"families", families},
            {"tuning", {{"mode", rc.tune ? "grid" : "fixed"}, {"trials_per_config", rc.tuning_trials},
                        {"sarima_orders", orders}, {"grids", grids}}},
            {"configs", configs},
            {"trials", rc.trials},
            {"base_seed", rc.base_seed},
            {"held_back_residuals", rc.held_back_residuals},
            {"horizons", rc.horizons},
            {"convergence", {{"family", to_string(rc.convergence_family)}, {"counts", rc.convergence_counts}}},
            {"cross_seed",
             {{"family", to_string(rc.cross_seed_family)}, {"seeds", rc.cross_seeds}, {"trials", rc.cross_seed_trials}}},
            {"stratify", stratify},
            {"stratified_trials", rc.stratified_trials}};
}

/// Parses and validates a run configuration. Relative data paths resolve against `base_dir`.
inline RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
    using namespace run_config_detail;
    RunConfig rc;
    try {
        const auto& d = j.at("data");
        const auto kind = d.value("kind", std::string("synthetic"));
        if (kind == "synthetic") {
            rc.data.kind = DataKind::synthetic;
            auto& s = rc.data.synthetic;
            const auto spec = d.value("synthetic", nlohmann::json::object());
            s.start = parse_iso_month(spec.value("start", std::string("2015-01")));
            s.n_months = spec.value("months", s.n_months);
            s.base_level = spec.value("base_level", s.base_level);
            s.linear_slope = spec.value("linear_slope", s.linear_slope);
            if (spec.contains("seasonal")) {
                const auto v = spec.at("seasonal").get<std::vector<double>>();
                if (v.size() != 12) fail(ErrorKind::config, "synthetic.seasonal needs 12 amplitudes");
                std::copy(v.begin(), v.end(), s.seasonal_amplitudes.begin());
            }
            s.noise_sd = spec.value("noise_sd", s.noise_sd);
            rc.data.synthetic_seed = d.value("seed", rc.data.synthetic_seed);
            if (d.contains("level_shift"))
                rc.data.level_shift = std::make_pair(parse_iso_month(d["level_shift"].at("from").get<std::string>()),
                                                     d["level_shift"].at("amount").get<double>());
        } else if (kind == "series_csv" || kind == "wonder_export") {
            rc.data.kind = kind == "series_csv" ? DataKind::series_csv : DataKind::wonder_export;
            fs::path p = d.at("path").get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            rc.data.path = p.string();
            rc.data.dimensions = d.value("dimensions", std::vector<std::string>{});
            rc.data.suppression = parse_suppression_mode(d.value("suppression", std::string("fail")));
            rc.data.stratum = d.value("stratum", Stratum{});
        } else {
            fail(ErrorKind::config, "unknown data kind '" + kind + "' (synthetic|series_csv|wonder_export)");
        }

        const auto& sp = j.at("split");
        rc.split.train = range_from(sp.at("train"));
        rc.split.validation = range_from(sp.at("validation"));
        if (sp.contains("projection") && !sp["projection"].is_null()) rc.split.projection = range_from(sp["projection"]);

        if (j.contains("families")) {
            rc.families.clear();
            for (const auto& f : j["families"]) rc.families.push_back(parse_family(f.get<std::string>()));
        }
        if (j.contains("tuning")) {
            const auto& t = j["tuning"];
            const auto mode = t.value("mode", std::string("fixed"));
            if (mode != "fixed" && mode != "grid") fail(ErrorKind::config, "tuning.mode must be 'fixed' or 'grid'");
            rc.tune = mode == "grid";
            rc.tuning_trials = t.value("trials_per_config", rc.tuning_trials);
            for (const auto& o : t.value("sarima_orders", nlohmann::json::array()))
                rc.sarima_orders.push_back(sarima_order_from_json(o));
            const auto grids = t.value("grids", nlohmann::json::object());
            for (const auto& [name, list] : grids.items()) {
                const Family f = parse_family(name);
                auto& g = rc.grids[f];
                for (auto c : list) {
                    c["family"] = name;
                    g.push_back(model_config_from_json(c));
                }
            }
        }
        const auto configs = j.value("configs", nlohmann::json::object());
        for (const auto& [name, c] : configs.items()) {
            auto cj = c;
            cj["family"] = name;
            rc.configs[parse_family(name)] = model_config_from_json(cj);
        }
        rc.trials = j.value("trials", rc.trials);
        rc.base_seed = j.value("base_seed", rc.base_seed);
        rc.held_back_residuals = j.value("held_back_residuals", rc.held_back_residuals);
        rc.horizons = j.value("horizons", rc.horizons);
        if (j.contains("convergence")) {
            const auto& c = j["convergence"];
            rc.convergence_family = parse_family(c.value("family", std::string("lstm")));
            rc.convergence_counts = c.value("counts", rc.convergence_counts);
        }
        if (j.contains("cross_seed")) {
            const auto& c = j["cross_seed"];
            rc.cross_seed_family = parse_family(c.value("family", std::string("lstm")));
            rc.cross_seeds = c.value("seeds", rc.cross_seeds);
            rc.cross_seed_trials = c.value("trials", rc.cross_seed_trials);
        }
        rc.stratify = j.value("stratify", rc.stratify);
        rc.stratified_trials = j.value("stratified_trials", rc.stratified_trials);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, std::string("run config: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::config) throw;
        fail(ErrorKind::config, std::string("run config: ") + e.what());
    }
    rc.validate();
    return rc;
}

inline RunConfig load_run_config(const fs::path& path) {
    return run_config_from_json(read_json_file(path), path.parent_path());
}

/// Reads the raw export of a WONDER-backed config, with suppression resolved.
inline StratifiedDataset load_dataset(const RunConfig& rc) {
    if (rc.data.kind != DataKind::wonder_export) fail(ErrorKind::config, "data source is not a WONDER export");
    return resolve_suppression(read_wonder_export(rc.data.path, rc.data.dimensions), {rc.data.suppression});
}

/// The univariate series a run works on.
inline MonthlySeries load_series(const RunConfig& rc) {
    switch (rc.data.kind) {
        case DataKind::synthetic: {
            auto s = generate_synthetic(rc.data.synthetic, rc.data.synthetic_seed);
            if (rc.data.level_shift) s = apply_level_shift(s, rc.data.level_shift->first, rc.data.level_shift->second);
            return s;
        }
        case DataKind::series_csv: return read_series_csv(rc.data.path);
        case DataKind::wonder_export: return to_series(load_dataset(rc), rc.data.stratum);
    }
    fail(ErrorKind::config, "unknown data source");
}

}  // namespace cfmort
