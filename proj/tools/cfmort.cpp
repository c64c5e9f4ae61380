// cfmort: command-line front end. Each subcommand is a thin wrapper over the
// header-only library; exit status is 0 on success, 1 on a library error and
// 2 on a usage error.

#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfmort/http.hpp"
#include "cfmort/ingest.hpp"
#include "cfmort/pipeline.hpp"
#include "cfmort/service.hpp"

namespace {

using namespace cfmort;

struct Common {
    std::string config;
    std::string out = "runs";
    std::size_t workers = 1;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out, "output root; each run gets its own directory")->capture_default_str();
    cmd->add_option("--workers", c.workers, "parallel trials")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--seed", c.seed, "override base_seed");
    cmd->add_flag("--quiet", c.quiet, "no progress on stderr");
}

RunConfig load(const Common& c) {
    auto rc = load_run_config(c.config);
    if (c.seed) rc.base_seed = *c.seed;
    rc.validate();
    return rc;
}

PipelineOptions options(const Common& c) {
    PipelineOptions o;
    o.workers = c.workers;
    if (!c.quiet) o.progress = [](const std::string& msg) { std::cerr << "[cfmort] " << msg << "\n"; };
    return o;
}

void report(const std::string& id, const fs::path& dir) { std::cout << id << "\n" << dir.string() << "\n"; }

std::string file_label(std::string s) {
    for (char& ch : s)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '=' || ch == '.')) ch = '_';
    return s;
}

std::string coverage(const MonthlySeries& s) {
    return std::to_string(s.size()) + " months, " + s.start().iso() + ".." + s.end().iso();
}

int cmd_ingest(const std::string& input, const std::vector<std::string>& dims, const std::string& policy,
               const std::string& out) {
    SuppressionPolicy p;
    p.mode = parse_suppression_mode(policy);
    const auto dataset = resolve_suppression(read_wonder_export(input, dims), p);
    const fs::path dir(out);
    const auto national = to_series(dataset);
    write_text_file(dir / "national.csv", write_series_csv(national));
    std::cout << coverage(national) << "\n" << (dir / "national.csv").string() << "\n";
    for (const auto& dim : dataset.dimensions) {
        for (const auto& cat : categories(dataset, dim)) {
            const auto s = to_series(dataset, {{dim, cat}});
            const auto path = dir / (file_label(dim + "=" + cat) + ".csv");
            write_text_file(path, write_series_csv(s));
            std::cout << path.string() << "\n";
        }
    }
    return 0;
}

int cmd_synth(const Common& c) {
    auto rc = load_run_config(c.config);
    if (rc.data.kind != DataKind::synthetic) fail(ErrorKind::config, "synth needs a synthetic data section");
    if (c.seed) rc.data.synthetic_seed = *c.seed;
    const auto series = load_series(rc);
    const fs::path out(c.out);
    write_text_file(out, write_series_csv(series));
    std::cout << coverage(series) << "\n" << out.string() << "\n";
    return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const std::string& root, const std::string& host, int port, const std::string& static_dir,
              std::size_t slots, std::size_t workers) {
    Service service({root, slots, workers});
    httplib::Server server;
    mount_routes(server, service, static_dir);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    std::cerr << "[cfmort] serving " << root << " on http://" << host << ":" << port << "\n";
    if (!server.listen(host, port)) fail(ErrorKind::io, "cannot listen on " + host + ":" + std::to_string(port));
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Counterfactual mortality forecasting: tune, retrain, project and report"};
    app.require_subcommand(1);
    app.set_version_flag("--version", cfmort::kVersion);

    std::string input, policy = "fail", ingest_out = ".";
    std::vector<std::string> dims;
    auto* ingest = app.add_subcommand("ingest", "parse a tab-delimited WONDER export into series CSVs");
    ingest->add_option("--input", input, "export file")->required();
    ingest->add_option("--dimensions", dims, "stratification columns, e.g. sex,age")->delimiter(',');
    ingest->add_option("--policy", policy, "suppressed cells: fail|zero|midpoint")->capture_default_str();
    ingest->add_option("--out", ingest_out, "output directory")->capture_default_str();

    Common synth_c;
    synth_c.out = "series.csv";
    auto* synth = app.add_subcommand("synth", "generate the synthetic series described by a run config");
    synth->add_option("--config", synth_c.config, "run configuration with a synthetic data section")
        ->required()
        ->check(CLI::ExistingFile);
    synth->add_option("--out", synth_c.out, "output CSV")->capture_default_str();
    synth->add_option("--seed", synth_c.seed, "override the synthetic data seed");

    Common pipe_c, conv_c, xseed_c, hor_c;
    bool held_back = false;
    auto* pipeline = app.add_subcommand("pipeline", "tune, retrain on train+validation, project and report");
    add_common(pipeline, pipe_c);
    pipeline->add_flag("--held-back-residuals", held_back,
                       "conformal radius from the retrained model's validation errors");
    auto* converge = app.add_subcommand("converge", "metric convergence over increasing trial counts");
    add_common(converge, conv_c);
    std::vector<std::size_t> counts;
    converge->add_option("--counts", counts, "trial counts, e.g. 10,20,50")->delimiter(',');
    auto* crossseed = app.add_subcommand("crossseed", "validation RMSE under several base seeds");
    add_common(crossseed, xseed_c);
    std::vector<std::uint64_t> seeds;
    crossseed->add_option("--seeds", seeds, "base seeds, at least two")->delimiter(',');
    auto* horizons = app.add_subcommand("horizons", "projection error by horizon");
    add_common(horizons, hor_c);

    std::string root = "runs", host = "127.0.0.1", static_dir;
    int port = 8080;
    std::size_t slots = 1, serve_workers = 1;
    auto* serve = app.add_subcommand("serve", "JSON API over an output root");
    serve->add_option("--root", root, "output root holding index.json")->capture_default_str();
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->check(CLI::Range(0, 65535))->capture_default_str();
    serve->add_option("--static", static_dir, "dashboard assets served at /");
    serve->add_option("--slots", slots, "projections computed concurrently")->check(CLI::PositiveNumber);
    serve->add_option("--workers", serve_workers, "trial workers per projection")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(input, dims, policy, ingest_out);
        if (*synth) return cmd_synth(synth_c);
        if (*pipeline) {
            auto rc = load(pipe_c);
            if (held_back) rc.held_back_residuals = true;
            const auto r = run_pipeline(rc, pipe_c.out, options(pipe_c));
            report(r.run_id, r.dir);
        } else if (*converge) {
            auto rc = load(conv_c);
            if (!counts.empty()) rc.convergence_counts = counts;
            const auto r = run_convergence(rc, load_series(rc), conv_c.out, options(conv_c));
            report(r.run_id, r.dir);
        } else if (*crossseed) {
            auto rc = load(xseed_c);
            if (!seeds.empty()) rc.cross_seeds = seeds;
            const auto r = run_cross_seed(rc, load_series(rc), xseed_c.out, options(xseed_c));
            report(r.run_id, r.dir);
        } else if (*horizons) {
            const auto rc = load(hor_c);
            const auto r = run_horizons(rc, load_series(rc), hor_c.out, options(hor_c));
            report(r.run_id, r.dir);
        } else if (*serve) {
            return cmd_serve(root, host, port, static_dir, slots, serve_workers);
        }
    } catch (const cfmort::Error& e) {
        std::cerr << "cfmort: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
