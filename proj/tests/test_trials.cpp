#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cfmort/trials.hpp"
#include "test_util.hpp"

using namespace cfmort;
using cfmort::testing::error_kind_of;

namespace {

ModelConfig toy(Family f) {
    ModelConfig c = published_config(f);
    c.strict = false;
    c.lookback = 3;
    c.batch_size = 8;
    c.epochs = 5;
    c.hidden = 3;
    c.encoder_hidden = 3;
    c.decoder_hidden = 2;
    c.d_model = 4;
    c.heads = 2;
    c.learning_rate = 1e-2;
    return c;
}

MonthlySeries fixture(std::uint64_t seed = 11) {
    SyntheticSpec spec;
    spec.n_months = 84;
    spec.base_level = 3000.0;
    spec.linear_slope = 5.0;
    for (int m = 0; m < 12; ++m) spec.seasonal_amplitudes[m] = 200.0 * std::sin(2.0 * M_PI * m / 12.0);
    spec.noise_sd = 40.0;
    return generate_synthetic(spec, seed);
}

SplitSpec spec_with_projection() {
    SplitSpec s;
    s.train = {{2015, 1}, {2018, 12}};
    s.validation = {{2019, 1}, {2019, 12}};
    s.projection = MonthRange{{2020, 1}, {2021, 12}};
    return s;
}

TrialRecord record(std::uint64_t seed, double rmse) {
    TrialRecord r;
    r.seed = seed;
    r.validation.rmse = rmse;
    r.validation.n = 12;
    return r;
}

TrialEnsemble ensemble_with_rmse(std::uint64_t base, std::vector<double> rmses) {
    std::vector<TrialRecord> recs;
    for (std::size_t i = 0; i < rmses.size(); ++i) recs.push_back(record(base + i, rmses[i]));
    return aggregate(toy(Family::lstm), recs);
}

}  // namespace

TEST_CASE("summary statistics use the sample standard deviation") {
    const std::vector<double> xs{1.0, 2.0, 3.0};
    const auto s = summarize(xs);
    CHECK(s.mean == 2.0);
    CHECK(s.sd == 1.0);
    CHECK(s.n == 3);
    const std::vector<double> one{402.25};
    CHECK(summarize(one).sd == 0.0);
    CHECK(summarize(one).mean == 402.25);
    const std::vector<double> same(7, 0.1);
    CHECK(summarize(same).mean == 0.1);
    CHECK(summarize(same).sd == 0.0);
    CHECK(error_kind_of([] { summarize(std::vector<double>{}); }) == ErrorKind::empty);
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("ci width follows 1.96 sd over root n") {
    CHECK(ci_width(10.0, 25) == Catch::Approx(3.92).margin(1e-12));
    CHECK(ci_width(0.0, 10) == 0.0);
    CHECK(ci_width(4.0, 100) / ci_width(4.0, 25) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("trial seeds follow base plus index and a single trial is its own aggregate") {
    const auto data = split(fixture(), spec_with_projection());
    const auto one = run_trials(toy(Family::lstm), data, 1, 42);
    REQUIRE(one.per_trial.size() == 1);
    CHECK(one.seeds == std::vector<std::uint64_t>{42});
    CHECK(one.validation.rmse.mean == one.per_trial[0].validation.rmse);
    CHECK(one.validation.rmse.sd == 0.0);
    REQUIRE(one.projection.has_value());
    CHECK(one.projection->mape.mean == one.per_trial[0].projection->mape);

    const auto three = run_trials(toy(Family::lstm), data.masked(), 3, 100);
    CHECK(three.seeds == std::vector<std::uint64_t>{100, 101, 102});
    CHECK_FALSE(three.projection.has_value());
    CHECK(three.ok_count() == 3);
    CHECK(error_kind_of([&] { run_trials(toy(Family::lstm), data, 0, 42); }) == ErrorKind::config);
}

TEST_CASE("sarima ensembles have zero spread") {
    const auto data = split(fixture(), spec_with_projection());
    const auto e = run_trials(published_config(Family::sarima), data, 4, 42);
    CHECK(e.ok_count() == 4);
    for (const auto* m : {&e.train, &e.validation, &*e.final_train, &*e.projection}) {
        CHECK(m->rmse.sd == 0.0);
        CHECK(m->mae.sd == 0.0);
        CHECK(m->mape.sd == 0.0);
        CHECK(m->pi_coverage.sd == 0.0);
    }
    CHECK(e.mean_projection() == e.per_trial[0].projection_path);
    CHECK(e.per_trial[3].seed == 45);
}

TEST_CASE("neural trials carry conformal intervals from validation residuals") {
    const auto data = split(fixture(), spec_with_projection());
    const auto e = run_trials(toy(Family::seq2seq), data, 2, 7);
    for (const auto& t : e.per_trial) {
        REQUIRE(t.ok());
        CHECK(t.validation_residuals.size() == 12);
        CHECK(t.radius == conformal_radius(t.validation_residuals));
        CHECK(t.projection_radius == t.radius);
        CHECK(t.projection_path.size() == 24);
        CHECK(t.projection_path.start == YearMonth{2020, 1});
        for (std::size_t i = 0; i < t.projection_path.size(); ++i)
            CHECK(t.projection_path.upper[i] - t.projection_path.points[i] == Catch::Approx(t.radius).margin(1e-9));
    }

    TrialOptions held;
    held.held_back_residuals = true;
    const auto h = run_trials(toy(Family::seq2seq), data, 1, 7, held);
    CHECK(h.per_trial[0].validation == e.per_trial[0].validation);
    CHECK(h.per_trial[0].projection_radius >= 0.0);
}

TEST_CASE("failed trials are excluded but counted") {
    std::vector<TrialRecord> recs{record(1, 2.0), record(2, 4.0), record(3, 0.0)};
    recs[2].status = "divergence";
    recs[2].message = "non-finite training loss in epoch 3";
    const auto e = aggregate(toy(Family::lstm), recs);
    CHECK(e.census.at("ok") == 2);
    CHECK(e.census.at("divergence") == 1);
    CHECK(e.validation.rmse.mean == 3.0);
    CHECK(e.per_trial.size() == 3);
    CHECK(e.seeds.size() == 3);

    for (auto& r : recs) r.status = "divergence";
    CHECK(error_kind_of([&] { aggregate(toy(Family::lstm), recs); }) == ErrorKind::exhaustion);
}

TEST_CASE("a single-configuration grid wins trivially") {
    const auto data = split(fixture(), spec_with_projection());
    const auto r = grid_search_dl({toy(Family::lstm)}, data.masked(), 2, 42);
    CHECK(r.best == toy(Family::lstm));
    REQUIRE(r.leaderboard.size() == 1);
    CHECK(r.leaderboard[0].census.at("ok") == 2);
    CHECK(error_kind_of([&] { grid_search_dl(std::vector<ModelConfig>{}, data.masked(), 2, 42); }) == ErrorKind::config);
    CHECK(error_kind_of([&] { grid_search_dl({published_config(Family::sarima)}, data.masked(), 2, 42); }) ==
          ErrorKind::config);
}

TEST_CASE("leaderboard ties break on lookback, batch size, epochs, then grid order") {
    auto entry = [](std::size_t idx, double rmse, int L, int B, int E) {
        LeaderboardEntry e;
        e.grid_index = idx;
        e.config = published_config(Family::lstm);
        e.config.lookback = L, e.config.batch_size = B, e.config.epochs = E;
        MetricsSummary m;
        m.rmse.mean = rmse;
        e.validation = m;
        return e;
    };
    CHECK(leaderboard_less(entry(5, 1.0, 12, 32, 100), entry(0, 2.0, 3, 8, 50)));
    CHECK(leaderboard_less(entry(5, 1.0, 3, 32, 100), entry(0, 1.0, 5, 8, 50)));
    CHECK(leaderboard_less(entry(5, 1.0, 5, 8, 100), entry(0, 1.0, 5, 16, 50)));
    CHECK(leaderboard_less(entry(5, 1.0, 5, 8, 50), entry(0, 1.0, 5, 8, 100)));
    CHECK(leaderboard_less(entry(0, 1.0, 5, 8, 50), entry(5, 1.0, 5, 8, 50)));
    auto dead = entry(0, 0.0, 3, 8, 50);
    dead.validation.reset();
    CHECK(leaderboard_less(entry(9, 1e9, 12, 32, 100), dead));
}

TEST_CASE("grid ranking does not depend on the worker count") {
    const auto data = split(fixture(), spec_with_projection());
    std::vector<ModelConfig> grid;
    for (int L : {3, 5}) {
        auto c = toy(Family::transformer);
        c.lookback = L;
        grid.push_back(c);
    }
    TrialOptions serial, wide;
    wide.workers = 3;
    const auto a = grid_search_dl(grid, data.masked(), 2, 42, serial);
    const auto b = grid_search_dl(grid, data.masked(), 2, 42, wide);
    REQUIRE(a.leaderboard.size() == b.leaderboard.size());
    CHECK(a.best == b.best);
    for (std::size_t i = 0; i < a.leaderboard.size(); ++i) {
        CHECK(a.leaderboard[i].grid_index == b.leaderboard[i].grid_index);
        CHECK(a.leaderboard[i].validation == b.leaderboard[i].validation);
    }
}

TEST_CASE("tuning never sees the projection segment") {
    const auto clean = split(fixture(), spec_with_projection());
    auto corrupted = clean;
    std::vector<double> junk(corrupted.projection.size(), 1.0e6);
    corrupted.projection = MonthlySeries(clean.projection.start(), junk);

    const auto a = grid_search_dl({toy(Family::lstm)}, clean.masked(), 2, 42);
    const auto b = grid_search_dl({toy(Family::lstm)}, corrupted.masked(), 2, 42);
    CHECK(a.leaderboard[0].validation == b.leaderboard[0].validation);

    const auto ea = run_trials(toy(Family::lstm), clean, 2, 42);
    const auto eb = run_trials(toy(Family::lstm), corrupted, 2, 42);
    CHECK(ea.validation == eb.validation);
    CHECK(ea.train == eb.train);
    CHECK(ea.per_trial[1].validation_path == eb.per_trial[1].validation_path);
    CHECK_FALSE(ea.projection == eb.projection);
}

TEST_CASE("convergence reuses trials and matches fresh ensembles") {
    const auto data = split(fixture(), spec_with_projection()).masked();
    const std::vector<std::size_t> counts{2, 4};
    const auto curve = convergence(toy(Family::lstm), data, counts, 42);
    CHECK(curve.trials.size() == 4);
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const auto fresh = run_trials(toy(Family::lstm), data, counts[k], 42);
        CHECK(curve.metric("rmse").points[k].summary == fresh.validation.rmse);
        CHECK(curve.metric("mape").points[k].summary == fresh.validation.mape);
    }
    for (const auto& m : curve.metrics)
        for (const auto& p : m.points) CHECK(p.ci_width == 1.96 * p.summary.sd / std::sqrt(static_cast<double>(p.summary.n)));
    CHECK_FALSE(curve.metric("pi_coverage").gated);

    const std::vector<std::size_t> bad{4, 2};
    CHECK(error_kind_of([&] { convergence(toy(Family::lstm), data, bad, 42); }) == ErrorKind::config);
}

TEST_CASE("identical trials converge at the first check") {
    const auto data = split(fixture(), spec_with_projection()).masked();
    const std::vector<std::size_t> counts{3, 6, 9};
    const auto curve = convergence(published_config(Family::sarima), data, counts, 42);
    for (const auto& m : curve.metrics) {
        for (const auto& p : m.points) CHECK(p.ci_width == 0.0);
        CHECK(m.first_converged() == std::optional<std::size_t>(3));
    }
    CHECK(curve.converged());
}

TEST_CASE("cross-seed overall row") {
    std::vector<TrialEnsemble> per_seed{ensemble_with_rmse(42, {9, 11}), ensemble_with_rmse(123, {19, 21}),
                                        ensemble_with_rmse(456, {29, 31})};
    const auto r = summarize_seeds(per_seed);
    CHECK(r.mean_of_means.mean == 20.0);
    CHECK(r.mean_of_means.sd == 10.0);
    CHECK(r.mean_of_sds.mean == std::sqrt(2.0));
    CHECK(r.mean_of_sds.sd == 0.0);
    CHECK(r.base_seeds == std::vector<std::uint64_t>{42, 123, 456});
    CHECK(std::vector<std::uint64_t>(kPaperSeeds.begin(), kPaperSeeds.end()) ==
          std::vector<std::uint64_t>{42, 123, 456, 789, 2024});

    const auto data = split(fixture(), spec_with_projection()).masked();
    const std::vector<std::uint64_t> one{42};
    CHECK(error_kind_of([&] { cross_seed(toy(Family::lstm), data, one, 2); }) == ErrorKind::config);

    const std::vector<std::uint64_t> two{42, 123};
    const auto sarima = cross_seed(published_config(Family::sarima), data, two, 2);
    CHECK(sarima.mean_of_means.sd == 0.0);
}

TEST_CASE("stratified runs") {
    StratifiedDataset ds;
    ds.dimensions = {"sex"};
    const auto base = fixture(3);
    for (std::size_t i = 0; i < base.size(); ++i) {
        const auto m = base.month_at(i);
        ds.records.push_back({m.year, m.month, {{"sex", "Female"}}, static_cast<std::int64_t>(base[i] * 0.3)});
        ds.records.push_back({m.year, m.month, {{"sex", "Male"}}, static_cast<std::int64_t>(base[i] * 0.7)});
        if (i != 30) ds.records.push_back({m.year, m.month, {{"sex", "Unknown"}}, 50});
    }
    const std::vector<ModelConfig> configs{published_config(Family::sarima), toy(Family::lstm)};
    const auto r = run_stratified(ds, {"sex"}, configs, spec_with_projection(), 2, 42);
    REQUIRE(r.strata.size() == 2);
    CHECK(r.strata[0].label == "sex=Female");
    CHECK(r.strata[1].label == "sex=Male");
    CHECK(r.strata[0].ensembles.size() == 2);
    REQUIRE(r.skipped.size() == 1);
    CHECK(r.skipped.count("sex=Unknown") == 1);

    const auto pooled = pooled_by_family(r);
    CHECK(pooled.at(Family::sarima).rmse.n == 4);
    CHECK(pooled.at(Family::lstm).rmse.n == 4);

    const auto national = run_stratified(ds, {}, {toy(Family::lstm)}, spec_with_projection(), 2, 42);
    REQUIRE(national.strata.size() == 1);
    CHECK(national.strata[0].label == "national");
    const auto direct = run_trials(toy(Family::lstm), split(to_series(ds), spec_with_projection()), 2, 42);
    CHECK(national.strata[0].ensembles.at(Family::lstm).projection == direct.projection);

    CHECK(error_kind_of([&] { run_stratified(ds, {"state"}, configs, spec_with_projection(), 1, 42); }) ==
          ErrorKind::schema);
}
