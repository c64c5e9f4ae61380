#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <thread>

#include "cfmort/http.hpp"
#include "cfmort/pipeline.hpp"
#include "cfmort/service.hpp"
#include "test_util.hpp"

using namespace cfmort;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("cfmort_service_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ModelConfig toy_lstm() {
    ModelConfig c = published_config(Family::lstm);
    c.strict = false;
    c.lookback = 3;
    c.batch_size = 8;
    c.epochs = 3;
    c.hidden = 3;
    c.learning_rate = 1e-2;
    return c;
}

RunConfig fixture_config() {
    RunConfig rc;
    auto& s = rc.data.synthetic;
    s.n_months = 108;
    s.base_level = 4000.0;
    s.linear_slope = 6.0;
    for (int m = 0; m < 12; ++m) s.seasonal_amplitudes[m] = 250.0 * std::cos(2.0 * M_PI * m / 12.0);
    s.noise_sd = 50.0;
    rc.data.synthetic_seed = 9;
    rc.data.level_shift = std::make_pair(YearMonth{2020, 1}, 900.0);
    rc.split.train = {{2015, 1}, {2018, 12}};
    rc.split.validation = {{2019, 1}, {2019, 12}};
    rc.split.projection = MonthRange{{2020, 1}, {2023, 12}};
    rc.families = {Family::sarima};
    rc.trials = 1;
    return rc;
}

/// One SARIMA pipeline run plus a bare data file, shared by the tests below.
struct Fixture {
    fs::path root;
    std::string run_id;
    MonthlySeries series;

    Fixture() : root(scratch("root")) {
        const auto rc = fixture_config();
        series = load_series(rc);
        run_id = run_pipeline(rc, series, root).run_id;
        write_text_file(root / "national.csv", write_series_csv(series));
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

json request(const std::string& family, int horizon, std::size_t trials = 1, std::uint64_t seed = 42) {
    return {{"data", "national"},
            {"family", family},
            {"train_window", {{"start", "2015-01"}, {"end", "2019-12"}}},
            {"horizon", horizon},
            {"trials", trials},
            {"seed", seed}};
}

std::set<std::string> keys_of(const json& j) {
    std::set<std::string> out;
    for (auto it = j.begin(); it != j.end(); ++it) out.insert(it.key());
    return out;
}

}  // namespace

TEST_CASE("listing endpoints") {
    const auto& fx = fixture();
    Service svc({fx.root});
    CHECK(svc.models().json() == json{"sarima", "lstm", "seq2seq", "seq2seq_attn", "transformer"});

    const auto runs = svc.runs().json();
    REQUIRE(runs["runs"].size() == 1);
    CHECK(runs["runs"][0]["id"] == fx.run_id);

    const auto s = svc.series(fx.run_id);
    REQUIRE(s.status == 200);
    CHECK(s.json()["values"].size() == 108);
    CHECK(s.json()["start"] == "2015-01");
    CHECK(s.json()["end"] == "2023-12");
    CHECK(svc.series("national").json()["count"] == 108);

    CHECK(svc.series("unknown").status == 404);
    CHECK(svc.series("..%2Findex").status == 404);
    CHECK(svc.series("../index").status == 404);
}

TEST_CASE("excess endpoint serves the ExcessReport schema") {
    const auto& fx = fixture();
    Service svc({fx.root});
    const auto r = svc.excess(fx.run_id, "");
    REQUIRE(r.status == 200);
    const auto j = r.json();
    CHECK(keys_of(j) == std::set<std::string>{"monthly", "cumulative", "share_outside_pi"});
    REQUIRE(j["monthly"].size() == 48);
    CHECK(keys_of(j["monthly"][0]) == std::set<std::string>{"month", "observed", "counterfactual", "delta"});
    double sum = 0.0;
    for (const auto& m : j["monthly"]) sum += m["delta"].get<double>();
    CHECK(std::abs(j["cumulative"].get<double>() - sum) < 1e-6);
    CHECK(j["cumulative"].get<double>() > 0.0);

    CHECK(svc.excess(fx.run_id, "lstm").status == 404);
    CHECK(svc.excess("nope", "").status == 404);
    CHECK(svc.excess("", "").status == 400);

    const auto p = svc.projection(fx.run_id, "sarima").json();
    CHECK(p["counterfactual"]["points"].size() == 48);
    CHECK(p["observed"]["values"].size() == 108);
}

TEST_CASE("excess of a counterfactual equal to the observations is zero") {
    const auto root = scratch("flat");
    const MonthlySeries obs({2020, 1}, {10.0, 20.0, 30.0});
    ProjectionResult same{{2020, 1}, {10.0, 20.0, 30.0}, {9.0, 19.0, 29.0}, {11.0, 21.0, 31.0}};
    write_text_file(root / "r1/excess/sarima.json", to_json(excess(obs, same)).dump());
    upsert_run_index(root, {{"id", "r1"}, {"path", "r1"}});
    Service svc({root});
    const auto j = svc.excess("r1", "").json();
    CHECK(j["cumulative"] == 0.0);
    CHECK(j["share_outside_pi"] == 0.0);
}

TEST_CASE("projection requests are validated field by field") {
    const auto& fx = fixture();
    Service svc({fx.root});
    auto field_of = [&](const json& body) {
        const auto r = svc.project(body.dump());
        CHECK(r.status == 400);
        return r.json().value("field", "");
    };
    auto bad = request("sarima", 12);
    bad["train_window"]["start"] = "2010-01";
    CHECK(field_of(bad) == "train_window");
    bad = request("sarima", 12);
    bad["train_window"]["end"] = "2016-06";
    CHECK(field_of(bad) == "train_window");
    CHECK(field_of(request("sarima", 0)) == "horizon");
    CHECK(field_of(request("sarima", 49)) == "horizon");
    CHECK(field_of(request("arima", 12)) == "family");
    bad = request("sarima", 12);
    bad["run"] = fx.run_id;
    CHECK(field_of(bad) == "run");
    CHECK(svc.project("{not json").status == 400);

    bad = request("sarima", 12);
    bad["data"] = "missing";
    CHECK(svc.project(bad.dump()).status == 404);
}

TEST_CASE("sarima projections are cached and independent of the trial count") {
    const auto& fx = fixture();
    Service svc({fx.root});
    const auto first = svc.project(request("sarima", 12).dump());
    REQUIRE(first.status == 200);
    CHECK(first.headers.at("X-Cache") == "miss");
    const auto j = first.json();
    CHECK(j["counterfactual"]["points"].size() == 12);
    CHECK(j["counterfactual"]["lower"].size() == 12);
    CHECK(j["counterfactual"]["upper"].size() == 12);
    CHECK(j["counterfactual"]["start"] == "2020-01");
    CHECK(j["observed"]["values"].size() == 72);
    CHECK(j["excess"]["monthly"].size() == 12);
    for (std::size_t i = 0; i < 12; ++i)
        CHECK(j["counterfactual"]["lower"][i].get<double>() <= j["counterfactual"]["points"][i].get<double>());

    const auto again = svc.project(request("sarima", 12).dump());
    CHECK(again.headers.at("X-Cache") == "hit");
    CHECK(again.body == first.body);

    Service fresh({fx.root});
    const auto many = fresh.project(request("sarima", 12, 5, 7).dump());
    CHECK(many.headers.at("X-Cache") == "miss");
    CHECK(many.body == first.body);
}

TEST_CASE("provenance reproduces the projection through the pipeline") {
    const auto& fx = fixture();
    Service svc({fx.root});
    auto body = request("lstm", 12, 2, 5);
    body["config"] = to_json(toy_lstm());
    const auto r = svc.project(body.dump());
    REQUIRE(r.status == 200);
    const auto j = r.json();
    CHECK(j["provenance"]["seeds"] == json{5, 6});
    CHECK(j["provenance"]["config_hash"] == content_hash(to_json(toy_lstm()).dump()));

    const auto rc = run_config_from_json(j["provenance"]["run_config"]);
    const auto out = run_pipeline(rc, scratch("repro"));
    const auto p = read_json_file(out.dir / "projections/lstm.json");
    CHECK(rounded(p)["points"] == j["counterfactual"]["points"]);
    CHECK(rounded(p)["lower"] == j["counterfactual"]["lower"]);
}

TEST_CASE("async requests run as jobs and land in the cache") {
    const auto& fx = fixture();
    Service svc({fx.root});
    auto body = request("lstm", 12, 2);
    body["config"] = to_json(toy_lstm());
    body["async"] = true;
    const auto handle = svc.project(body.dump());
    REQUIRE(handle.status == 202);
    const auto id = handle.json()["id"].get<std::string>();
    CHECK(handle.json()["progress"]["total"] == 2);
    svc.wait_idle();

    const auto done = svc.job(id).json();
    REQUIRE(done["status"] == "done");
    CHECK(done["progress"]["completed"] == 2);
    body["async"] = false;
    const auto sync = svc.project(body.dump());
    CHECK(sync.headers.at("X-Cache") == "hit");
    CHECK(sync.json() == done["result"]);
    CHECK(svc.job("job-none").status == 404);
}

TEST_CASE("a request whose every trial fails returns the census") {
    const auto root = scratch("fail");
    auto values = fixture().series.values();
    values[62] = 0.0;  // inside the projection: MAPE is undefined
    write_text_file(root / "zeros.csv", write_series_csv(MonthlySeries({2015, 1}, values)));
    Service svc({root});
    auto body = request("sarima", 12);
    body["data"] = "zeros";
    const auto r = svc.project(body.dump());
    CHECK(r.status == 422);
    CHECK(r.json()["census"]["domain"] == 1);
}

TEST_CASE("routes answer over http with cors headers") {
    const auto& fx = fixture();
    Service svc({fx.root});
    httplib::Server server;
    mount_routes(server, svc);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    const auto models = client.Get("/api/models");
    REQUIRE(models);
    CHECK(models->status == 200);
    CHECK(models->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(json::parse(models->body).size() == 5);

    const auto pre = client.Options("/api/project");
    REQUIRE(pre);
    CHECK(pre->status == 204);

    CHECK(client.Get("/api/series/unknown")->status == 404);
    CHECK(json::parse(client.Get("/api/series/national")->body)["values"].size() == 108);

    const auto body = request("sarima", 24).dump();
    const auto a = client.Post("/api/project", body, "application/json");
    const auto b = client.Post("/api/project", body, "application/json");
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->get_header_value("X-Cache") == "miss");
    CHECK(b->get_header_value("X-Cache") == "hit");
    CHECK(a->body == b->body);

    const auto ex = client.Get(("/api/excess?run=" + fx.run_id).c_str());
    REQUIRE(ex);
    CHECK(ex->status == 200);

    server.stop();
    t.join();
}
