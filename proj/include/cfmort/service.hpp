#pragma once

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cfmort/evalkit.hpp"
#include "cfmort/ingest.hpp"
#include "cfmort/model_config.hpp"
#include "cfmort/run_config.hpp"
#include "cfmort/rundir.hpp"
#include "cfmort/serialize.hpp"
#include "cfmort/trials.hpp"

// JSON API over an output root: completed runs are read from disk, and
// on-demand projections are computed, cached by request hash and optionally
// run as background jobs. Handlers return status + body so they can be
// exercised without a socket; http.hpp binds them to routes.

namespace cfmort {

struct ApiResponse {
    int status = 200;
    std::string body;
    std::map<std::string, std::string> headers;

    nlohmann::json json() const { return nlohmann::json::parse(body); }
};

struct ProjectionRequest {
    std::string source;  ///< run id or data id
    Family family = Family::lstm;
    MonthRange train_window;
    int horizon = 12;
    std::size_t trials = 1;
    std::uint64_t seed = 42;
    std::optional<ModelConfig> config;
    bool async = false;

    /// SARIMA ignores seeds and replicates one fit, so its trial count and seed
    /// are normalised away and requests differing only there share a cache entry.
    nlohmann::json canonical() const {
        nlohmann::json j{{"source", source},
                         {"family", to_string(family)},
                         {"train_window", run_config_detail::range_json(train_window)},
                         {"horizon", horizon},
                         {"trials", family == Family::sarima ? std::size_t{1} : trials},
                         {"seed", family == Family::sarima ? std::uint64_t{0} : seed}};
        if (config) j["config"] = to_json(*config);
        return j;
    }
};

namespace service_detail {

/// A request error that names the offending field.
struct FieldError {
    std::string field;
    std::string message;
};

inline bool safe_id(const std::string& id) {
    if (id.empty() || id.size() > 200 || id[0] == '.') return false;
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == '='))
            return false;
    return id.find("..") == std::string::npos;
}

inline ApiResponse json_response(int status, const nlohmann::json& body) {
    return {status, body.dump(), {}};
}

inline ApiResponse error_response(int status, const std::string& kind, const std::string& message,
                                  const nlohmann::json& extra = {}) {
    nlohmann::json body{{"error", message}, {"kind", kind}};
    if (extra.is_object())
        for (auto it = extra.begin(); it != extra.end(); ++it) body[it.key()] = it.value();
    return json_response(status, body);
}

inline int status_for(ErrorKind k) {
    switch (k) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::io: return 500;
    case ErrorKind::exhaustion:
    case ErrorKind::divergence:
    case ErrorKind::numeric:
    case ErrorKind::convergence: return 422;
    default: return 400;
    }
}

inline ApiResponse from_error(const Error& e) { return error_response(status_for(e.kind()), std::string(to_string(e.kind())), e.what()); }

/// Rounds for transport, then restates the cumulative as the sum of the rounded deltas.
inline nlohmann::json transport_excess(const nlohmann::json& excess) {
    auto j = rounded(excess);
    double total = 0.0;
    for (const auto& m : j.at("monthly")) total += m.at("delta").get<double>();
    j["cumulative"] = rounded(nlohmann::json(total)).get<double>();
    return j;
}

inline ProjectionRequest parse_request(const nlohmann::json& j) {
    auto field = [&](const char* name, auto&& get) {
        try {
            return get();
        } catch (const Error& e) {
            throw FieldError{name, e.what()};
        } catch (const nlohmann::json::exception& e) {
            throw FieldError{name, e.what()};
        }
    };
    if (!j.is_object()) throw FieldError{"body", "request body must be a JSON object"};
    ProjectionRequest r;
    if (j.contains("run") == j.contains("data")) throw FieldError{"run", "give exactly one of 'run' or 'data'"};
    r.source = j.contains("run") ? j["run"].get<std::string>() : j["data"].get<std::string>();
    if (!safe_id(r.source)) throw FieldError{j.contains("run") ? "run" : "data", "malformed id '" + r.source + "'"};
    r.family = field("family", [&] { return parse_family(j.at("family").get<std::string>()); });
    r.train_window = field("train_window", [&] { return run_config_detail::range_from(j.at("train_window")); });
    r.horizon = field("horizon", [&] { return j.at("horizon").get<int>(); });
    if (r.horizon < 1) throw FieldError{"horizon", "horizon must be at least 1 month"};
    r.trials = field("trials", [&] { return j.value("trials", std::size_t{1}); });
    if (r.trials < 1 || r.trials > 1000) throw FieldError{"trials", "trials must lie in 1..1000"};
    r.seed = field("seed", [&] { return j.value("seed", std::uint64_t{42}); });
    if (j.contains("config") && !j["config"].is_null()) {
        r.config = field("config", [&] {
            auto c = model_config_from_json(j["config"]);
            c.validate();
            return c;
        });
        if (r.config->family != r.family) throw FieldError{"config", "config family differs from 'family'"};
    }
    r.async = field("async", [&] { return j.value("async", false); });
    return r;
}

}  // namespace service_detail

class Service {
public:
    struct Options {
        fs::path root;
        std::size_t compute_slots = 1;  ///< projections computed at once
        std::size_t workers = 1;        ///< trial workers inside one projection
    };

    explicit Service(Options opts)
        : opts_(std::move(opts)), slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, opts_.compute_slots))) {}

    ~Service() { wait_idle(); }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    const fs::path& root() const { return opts_.root; }

    // GET /api/runs
    ApiResponse runs() const {
        try {
            return service_detail::json_response(200, read_run_index(opts_.root));
        } catch (const Error& e) {
            return service_detail::from_error(e);
        }
    }

    // GET /api/models
    ApiResponse models() const {
        nlohmann::json names = nlohmann::json::array();
        for (Family f : kAllFamilies) names.push_back(to_string(f));
        return service_detail::json_response(200, names);
    }

    // GET /api/series/{id}
    ApiResponse series(const std::string& id) const {
        try {
            const auto s = load_source(id);
            auto body = rounded(to_json(s));
            body["id"] = id;
            body["end"] = s.end().iso();
            body["count"] = s.size();
            return service_detail::json_response(200, body);
        } catch (const Error& e) {
            return service_detail::from_error(e);
        }
    }

    // GET /api/projection?run=&family=
    ApiResponse projection(const std::string& run, const std::string& family) const {
        try {
            const auto [dir, fam] = locate(run, family, "projections");
            const auto p = projection_from_json(read_json_file(dir / "projections" / (fam + ".json")));
            const auto s = read_series_csv((dir / "series.csv").string());
            nlohmann::json body{{"run", run},
                                {"family", fam},
                                {"observed", to_json(s)},
                                {"counterfactual", to_json(p)}};
            return service_detail::json_response(200, rounded(body));
        } catch (const Error& e) {
            return service_detail::from_error(e);
        }
    }

    // GET /api/excess?run=&family=
    ApiResponse excess(const std::string& run, const std::string& family) const {
        try {
            const auto [dir, fam] = locate(run, family, "excess");
            const auto report = excess_from_json(read_json_file(dir / "excess" / (fam + ".json")));
            return service_detail::json_response(200, service_detail::transport_excess(to_json(report)));
        } catch (const Error& e) {
            return service_detail::from_error(e);
        }
    }

    // POST /api/project
    ApiResponse project(const std::string& body_text) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(body_text);
        } catch (const nlohmann::json::exception& e) {
            return service_detail::error_response(400, "parse", e.what(), {{"field", "body"}});
        }
        ProjectionRequest req;
        try {
            req = service_detail::parse_request(body);
        } catch (const service_detail::FieldError& fe) {
            return service_detail::error_response(400, "validation", fe.message, {{"field", fe.field}});
        }
        MonthlySeries data;
        try {
            data = load_source(req.source);
            validate_window(req, data);
        } catch (const service_detail::FieldError& fe) {
            return service_detail::error_response(400, "validation", fe.message, {{"field", fe.field}});
        } catch (const Error& e) {
            return service_detail::from_error(e);
        }
        const auto key = content_hash(req.canonical().dump() + "\n" + write_series_csv(data));

        {
            std::lock_guard lock(mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) return cached(it->second, "hit");
        }
        if (!req.async) {
            auto out = compute(req, data, nullptr);
            if (out.status == 200) {
                std::lock_guard lock(mutex_);
                cache_.emplace(key, out.body);
            }
            out.headers["X-Cache"] = "miss";
            return out;
        }
        return submit(key, req, data);
    }

    // GET /api/jobs/{id}
    ApiResponse job(const std::string& id) const {
        std::lock_guard lock(mutex_);
        const auto it = jobs_.find(id);
        if (it == jobs_.end()) return service_detail::error_response(404, "not_found", "no job '" + id + "'");
        return service_detail::json_response(200, job_json(id, *it->second));
    }

    /// Blocks until every background job has finished.
    void wait_idle() {
        std::vector<std::thread> threads;
        {
            std::lock_guard lock(mutex_);
            threads.swap(threads_);
        }
        for (auto& t : threads) t.join();
    }

private:
    struct Job {
        std::string status = "queued";  // queued | running | done | failed
        std::atomic<std::size_t> completed{0};
        std::size_t total = 0;
        int http_status = 0;
        std::string body;
    };

    static ApiResponse cached(const std::string& body, const char* state) { return {200, body, {{"X-Cache", state}}}; }

    static nlohmann::json job_json(const std::string& id, const Job& j) {
        nlohmann::json out{{"id", id},
                           {"status", j.status},
                           {"progress", {{"completed", j.completed.load()}, {"total", j.total}}}};
        if (j.status == "done") out["result"] = nlohmann::json::parse(j.body);
        if (j.status == "failed") out["error"] = nlohmann::json::parse(j.body);
        return out;
    }

    fs::path run_dir(const std::string& id) const {
        if (!service_detail::safe_id(id)) fail(ErrorKind::not_found, "unknown run '" + id + "'");
        const auto index = read_run_index(opts_.root);
        for (const auto& r : index["runs"])
            if (r.value("id", "") == id) return opts_.root / r.value("path", id);
        fail(ErrorKind::not_found, "unknown run '" + id + "'");
    }

    /// A run id resolves to the run's series.csv; any other id to <root>/<id>.csv.
    MonthlySeries load_source(const std::string& id) const {
        if (!service_detail::safe_id(id)) fail(ErrorKind::not_found, "unknown series '" + id + "'");
        const auto index = read_run_index(opts_.root);
        for (const auto& r : index["runs"])
            if (r.value("id", "") == id) return read_series_csv((opts_.root / r.value("path", id) / "series.csv").string());
        const auto path = opts_.root / (id + ".csv");
        if (!fs::exists(path)) fail(ErrorKind::not_found, "unknown series '" + id + "'");
        return read_series_csv(path.string());
    }

    /// Run directory plus family; the family defaults to lstm when present, else the first available.
    std::pair<fs::path, std::string> locate(const std::string& run, const std::string& family,
                                            const std::string& sub) const {
        if (run.empty()) fail(ErrorKind::spec, "query parameter 'run' is required");
        const auto dir = run_dir(run);
        if (!family.empty()) {
            const std::string fam = to_string(parse_family(family));
            if (!fs::exists(dir / sub / (fam + ".json")))
                fail(ErrorKind::not_found, "run '" + run + "' has no " + sub + " for " + fam);
            return {dir, fam};
        }
        if (fs::exists(dir / sub / "lstm.json")) return {dir, "lstm"};
        for (Family f : kAllFamilies)
            if (fs::exists(dir / sub / (std::string(to_string(f)) + ".json"))) return {dir, to_string(f)};
        fail(ErrorKind::not_found, "run '" + run + "' has no " + sub);
    }

    static void validate_window(const ProjectionRequest& r, const MonthlySeries& data) {
        const auto& w = r.train_window;
        const int need = SplitSpec::kMinTrainMonths + SplitSpec::kMinSegmentMonths;
        if (w.end < w.start || w.length() < need)
            throw service_detail::FieldError{"train_window", "training window must span at least " +
                                                                 std::to_string(need) + " months"};
        if (!data.covers(w.start) || !data.covers(w.end))
            throw service_detail::FieldError{"train_window", "window " + w.start.iso() + ".." + w.end.iso() +
                                                                 " outside data coverage " + data.start().iso() +
                                                                 ".." + data.end().iso()};
        if (!data.covers(w.end.plus(r.horizon)))
            throw service_detail::FieldError{"horizon", "horizon runs past the last observed month " +
                                                            data.end().iso()};
    }

    /// The split a request implies: the window's last 12 months validate, the horizon follows it.
    static SplitSpec split_for(const ProjectionRequest& r) {
        SplitSpec s;
        s.train = {r.train_window.start, r.train_window.end.plus(-SplitSpec::kMinSegmentMonths)};
        s.validation = {s.train.end.plus(1), r.train_window.end};
        s.projection = MonthRange{r.train_window.end.plus(1), r.train_window.end.plus(r.horizon)};
        return s;
    }

    ModelConfig config_for(const ProjectionRequest& r) const {
        if (r.config) return *r.config;
        try {
            const auto dir = run_dir(r.source);
            const auto selected = dir / "tuning" / "selected.json";
            if (fs::exists(selected)) {
                const auto j = read_json_file(selected);
                if (j.contains(to_string(r.family))) return model_config_from_json(j[to_string(r.family)]);
            }
            if (fs::exists(dir / "run_config.json"))
                return run_config_from_json(read_json_file(dir / "run_config.json"), dir).config_for(r.family);
        } catch (const Error&) {
        }
        return published_config(r.family);
    }

    /// The RunConfig whose pipeline run reproduces this response's counterfactual.
    nlohmann::json reproduction(const ProjectionRequest& r, const ModelConfig& config, const SplitSpec& s) const {
        RunConfig rc;
        rc.data.kind = DataKind::series_csv;
        try {
            rc.data.path = (run_dir(r.source) / "series.csv").string();
        } catch (const Error&) {
            rc.data.path = (opts_.root / (r.source + ".csv")).string();
        }
        rc.split = s;
        rc.families = {r.family};
        rc.configs[r.family] = config;
        rc.trials = r.family == Family::sarima ? 1 : r.trials;
        rc.base_seed = r.family == Family::sarima ? 0 : r.seed;
        return to_json(rc);
    }

    ApiResponse compute(const ProjectionRequest& req, const MonthlySeries& data, Job* job) {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{slots_};
        try {
            const auto spec = split_for(req);
            DatasetSplit d;
            d.train = data.slice(spec.train.start, spec.train.end);
            d.validation = data.slice(spec.validation.start, spec.validation.end);
            d.projection = data.slice(spec.projection->start, spec.projection->end);
            const auto config = config_for(req);
            const auto canonical = req.canonical();
            const auto trials = canonical["trials"].get<std::size_t>();
            const auto seed = canonical["seed"].get<std::uint64_t>();

            TrialOptions to;
            to.workers = opts_.workers;
            if (job) to.on_trial = [job](std::size_t) { ++job->completed; };
            auto records = trials_detail::run_records(config, d, trials, seed, to);
            std::map<std::string, int> census;
            for (const auto& t : records) ++census[t.status];
            if (!census.count("ok"))
                return service_detail::error_response(422, "exhaustion", "every trial failed: " + records.front().message,
                                                      {{"census", census}});
            const auto ensemble = aggregate(config, std::move(records));
            const auto mean = ensemble.mean_projection();
            const auto metrics = evaluate(d.projection, mean);
            const auto ex = cfmort::excess(d.projection, mean);

            nlohmann::json seeds = ensemble.seeds;
            nlohmann::json body{
                {"request", canonical},
                {"observed", to_json(data.slice(req.train_window.start, spec.projection->end))},
                {"counterfactual", to_json(mean)},
                {"metrics", to_json(metrics)},
                {"ensemble",
                 {{"census", census},
                  {"validation", to_json(ensemble.validation)},
                  {"projection", to_json(*ensemble.projection)}}},
                {"provenance",
                 {{"config", to_json(config)},
                  {"config_hash", content_hash(to_json(config).dump())},
                  {"seeds", seeds},
                  {"data_id", req.source},
                  {"data_hash", content_hash(write_series_csv(data))},
                  {"split", {{"train", run_config_detail::range_json(spec.train)},
                             {"validation", run_config_detail::range_json(spec.validation)},
                             {"projection", run_config_detail::range_json(*spec.projection)}}},
                  {"run_config", reproduction(req, config, spec)},
                  {"cli", "cfmort pipeline --config <provenance.run_config saved as JSON> --out <dir>"},
                  {"version", kVersion}}}};
            body = rounded(body);
            body["excess"] = service_detail::transport_excess(to_json(ex));
            return service_detail::json_response(200, body);
        } catch (const Error& e) {
            return service_detail::from_error(e);
        }
    }

    ApiResponse submit(const std::string& key, const ProjectionRequest& req, const MonthlySeries& data) {
        const std::string id = "job-" + key;
        std::lock_guard lock(mutex_);
        if (auto it = jobs_.find(id); it != jobs_.end() && it->second->status != "failed")
            return service_detail::json_response(202, job_json(id, *it->second));
        auto job = std::make_shared<Job>();
        job->total = req.family == Family::sarima ? 1 : req.trials;
        jobs_[id] = job;
        threads_.emplace_back([this, id, key, req, data, job] {
            {
                std::lock_guard l(mutex_);
                job->status = "running";
            }
            auto out = compute(req, data, job.get());
            std::lock_guard l(mutex_);
            job->http_status = out.status;
            job->body = out.body;
            job->status = out.status == 200 ? "done" : "failed";
            if (out.status == 200) cache_.emplace(key, out.body);
        });
        return service_detail::json_response(202, job_json(id, *job));
    }

    Options opts_;
    std::counting_semaphore<> slots_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> cache_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::vector<std::thread> threads_;
};

}  // namespace cfmort
