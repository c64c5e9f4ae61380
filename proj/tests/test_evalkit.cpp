#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "cfmort/evalkit.hpp"
#include "cfmort/rng.hpp"
#include "test_util.hpp"

using namespace cfmort;
using cfmort::testing::error_kind_of;

namespace {
std::vector<double> v(std::initializer_list<double> xs) { return xs; }
}  // namespace

TEST_CASE("point metrics") {
    CHECK(rmse(v({0, 0}), v({3, 4})) == Catch::Approx(std::sqrt(12.5)).margin(1e-12));
    CHECK(mae(v({0, 0}), v({3, 4})) == 3.5);
    CHECK(mape(v({100, 200}), v({110, 180})) == 10.0);
    const auto same = v({5, 6, 7});
    CHECK(rmse(same, same) == 0.0);
    CHECK(mae(same, same) == 0.0);
    CHECK(mape(same, same) == 0.0);
    CHECK(error_kind_of([] { mape(v({0, 1}), v({1, 1})); }) == ErrorKind::domain);
    CHECK(error_kind_of([] { rmse(v({1}), v({1, 2})); }) == ErrorKind::shape);
}

TEST_CASE("rmse dominates mae") {
    Rng rng(1);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> a(7), b(7);
        for (auto& x : a) x = rng.uniform(0, 100);
        for (auto& x : b) x = rng.uniform(0, 100);
        CHECK(rmse(a, b) >= mae(a, b) - 1e-12);
    }
    CHECK(rmse(v({0, 0}), v({2, -2})) == mae(v({0, 0}), v({2, -2})));
}

TEST_CASE("conformal radius examples") {
    std::vector<double> one_to_twenty(20);
    std::iota(one_to_twenty.begin(), one_to_twenty.end(), 1.0);
    CHECK(conformal_radius(one_to_twenty, 0.05) == Catch::Approx(19.05).margin(1e-12));
    CHECK(conformal_radius(v({10, 20, 30, 40}), 0.05) == Catch::Approx(38.5).margin(1e-12));
    CHECK(conformal_radius(v({7, 7, 7}), 0.05) == 7.0);
    CHECK(error_kind_of([] { conformal_radius(v({1}), 0.05); }) == ErrorKind::insufficient_data);
    CHECK(error_kind_of([] { conformal_radius(v({1, -1}), 0.05); }) == ErrorKind::domain);
}

TEST_CASE("conformal radius is monotone and scale-equivariant") {
    Rng rng(2);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> r(15);
        for (auto& x : r) x = rng.uniform(0, 50);
        const double q = conformal_radius(r);
        auto bumped = r;
        bumped[rng.below(r.size())] += rng.uniform(0, 10);
        CHECK(conformal_radius(bumped) >= q);
        auto scaled = r;
        for (auto& x : scaled) x *= 3.5;
        CHECK(conformal_radius(scaled) == Catch::Approx(3.5 * q).epsilon(1e-12));
    }
}

TEST_CASE("interval construction") {
    const auto zero = apply_intervals({2020, 1}, v({100, 200}), 0.0);
    CHECK(zero.lower == zero.points);
    CHECK(zero.upper == zero.points);
    const auto r = apply_intervals({2020, 1}, v({100, 10}), 30.0);
    CHECK(r.lower == v({70, 0}));
    CHECK(r.upper == v({130, 40}));
    CHECK(error_kind_of([] { apply_intervals({2020, 1}, v({1}), -1.0); }) == ErrorKind::domain);
}

TEST_CASE("coverage and width") {
    ProjectionResult r;
    r.start = {2020, 1};
    r.points = v({5, 5, 5});
    r.lower = v({0, 0, 0});
    r.upper = v({10, 10, 10});
    CHECK(pi_coverage(v({5, 10, 15}), r) == Catch::Approx(200.0 / 3.0).margin(1e-12));
    CHECK(pi_coverage(v({0, 10, 3}), r) == 100.0);
    CHECK(pi_width(apply_intervals({2020, 1}, v({100, 100}), 30.0)) == 60.0);
    CHECK(error_kind_of([&] { pi_coverage(v({1, 2}), r); }) == ErrorKind::shape);
}

TEST_CASE("conformal intervals reach nominal coverage on exchangeable errors") {
    double total = 0.0;
    for (int seed = 0; seed < 50; ++seed) {
        Rng rng(1000 + static_cast<std::uint64_t>(seed));
        std::vector<double> residuals(100);
        for (auto& r : residuals) r = std::abs(rng.normal(0.0, 25.0));
        const double q = conformal_radius(residuals);
        std::vector<double> points(1000), obs(1000);
        for (std::size_t i = 0; i < obs.size(); ++i) {
            points[i] = 1000.0;
            obs[i] = points[i] + rng.normal(0.0, 25.0);
        }
        total += pi_coverage(obs, apply_intervals({2020, 1}, points, q));
    }
    const double mean = total / 50.0;
    CHECK(mean >= 90.0);
    CHECK(mean <= 98.0);
}

TEST_CASE("excess mortality") {
    const MonthlySeries obs({2020, 1}, v({10, 20}));
    const auto r = apply_intervals({2020, 1}, v({8, 15}), 3.0);
    const auto ex = excess(obs, r);
    REQUIRE(ex.monthly.size() == 2);
    CHECK(ex.monthly[0].delta == 2.0);
    CHECK(ex.monthly[1].delta == 5.0);
    CHECK(ex.monthly[1].month == YearMonth{2020, 2});
    CHECK(ex.cumulative == 7.0);
    CHECK(ex.share_outside_pi == 0.5);

    const auto same = excess(obs, apply_intervals({2020, 1}, v({10, 20}), 0.0));
    CHECK(same.cumulative == 0.0);
    CHECK(same.share_outside_pi == 0.0);

    CHECK(error_kind_of([&] { excess(obs, apply_intervals({2020, 2}, v({8, 15}), 0.0)); }) == ErrorKind::alignment);
}

TEST_CASE("excess cumulative is the in-order sum of deltas") {
    Rng rng(3);
    std::vector<double> o(48), p(48);
    for (auto& x : o) x = rng.uniform(1000, 9000) + 0.1;
    for (auto& x : p) x = rng.uniform(1000, 9000) / 3.0;
    const auto ex = excess(MonthlySeries({2020, 1}, o), apply_intervals({2020, 1}, p, 10.0));
    double sum = 0.0;
    for (const auto& m : ex.monthly) sum += m.delta;
    CHECK(ex.cumulative == sum);
}

TEST_CASE("horizon slices") {
    std::vector<double> obs(48, 1000.0);
    const auto flat = apply_intervals({2020, 1}, obs, 0.0);
    for (const auto& [k, m] : horizon_slices(obs, flat)) {
        CHECK(m.rmse == 0.0);
        CHECK(m.mae == 0.0);
        CHECK(m.mape == 0.0);
        CHECK(m.n == static_cast<std::size_t>(k));
    }

    Rng rng(4);
    for (auto& x : obs) x = rng.uniform(500, 1500);
    std::vector<double> pts(48);
    for (auto& x : pts) x = rng.uniform(500, 1500);
    const auto r = apply_intervals({2020, 1}, pts, 200.0);
    const auto slices = horizon_slices(obs, r);
    CHECK(slices.size() == 4);
    CHECK(slices.at(48) == evaluate(std::span<const double>(obs), r));

    CHECK(error_kind_of([&] { horizon_slices(std::span<const double>(obs).first(30), r); }) == ErrorKind::range);
}
