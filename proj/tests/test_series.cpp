#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "cfmort/rng.hpp"
#include "cfmort/series.hpp"
#include "test_util.hpp"

using namespace cfmort;
using cfmort::testing::error_kind_of;

namespace {

MonthlySeries ramp(YearMonth start, std::size_t n) {
    std::vector<double> v(n);
    std::iota(v.begin(), v.end(), 1.0);
    return MonthlySeries(start, v);
}

SplitSpec main_split() {
    return {{{2015, 1}, {2018, 12}}, {{2019, 1}, {2019, 12}}, MonthRange{{2020, 1}, {2023, 12}}};
}

}  // namespace

TEST_CASE("split with the main 2015-2023 partition") {
    const auto parts = split(ramp({2015, 1}, 108), main_split());
    CHECK(parts.train.size() == 48);
    CHECK(parts.validation.size() == 12);
    CHECK(parts.projection.size() == 48);
    CHECK(parts.projection.start() == YearMonth{2020, 1});
}

TEST_CASE("split with the alternative 2010-2023 partition") {
    const SplitSpec alt{{{2010, 1}, {2017, 12}}, {{2018, 1}, {2018, 12}}, MonthRange{{2019, 1}, {2023, 12}}};
    const auto parts = split(ramp({2010, 1}, 168), alt);
    CHECK(parts.train.size() == 96);
    CHECK(parts.validation.size() == 12);
    CHECK(parts.projection.size() == 60);
}

TEST_CASE("split rejects non-contiguous or out-of-range specs") {
    auto spec = main_split();
    spec.validation = {{2019, 2}, {2020, 1}};
    spec.projection.reset();
    CHECK(error_kind_of([&] { split(ramp({2015, 1}, 108), spec); }) == ErrorKind::spec);
    CHECK(error_kind_of([&] { split(ramp({2015, 1}, 100), main_split()); }) == ErrorKind::range);
    spec = main_split();
    spec.train = {{2017, 1}, {2018, 12}};
    spec.train.start = {2017, 6};
    CHECK(error_kind_of([&] { split(ramp({2015, 1}, 108), spec); }) == ErrorKind::spec);
}

TEST_CASE("property: split segments partition the covered range") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const int train = 24 + static_cast<int>(rng.below(60));
        const int val = 12 + static_cast<int>(rng.below(24));
        const int proj = 12 + static_cast<int>(rng.below(48));
        const int lead = static_cast<int>(rng.below(10));
        const YearMonth s0{2000 + static_cast<int>(rng.below(10)), 1 + static_cast<int>(rng.below(12))};
        const auto series = ramp(s0, static_cast<std::size_t>(lead + train + val + proj + 3));
        const YearMonth t0 = s0.plus(lead);
        const SplitSpec spec{{t0, t0.plus(train - 1)},
                             {t0.plus(train), t0.plus(train + val - 1)},
                             MonthRange{t0.plus(train + val), t0.plus(train + val + proj - 1)}};
        const auto parts = split(series, spec);
        const auto joined = concat(parts.train_and_validation(), parts.projection);
        REQUIRE(joined == series.slice(t0, t0.plus(train + val + proj - 1)));
        REQUIRE(parts.masked().validation == parts.validation);
    }
}

TEST_CASE("make_windows enumerates pairs") {
    const std::vector<double> v{1, 2, 3, 4};
    const auto w = make_windows(v, 2);
    REQUIRE(w.size() == 2);
    CHECK(w.inputs[0] == std::vector<double>{1, 2});
    CHECK(w.targets[0] == 3);
    CHECK(w.inputs[1] == std::vector<double>{2, 3});
    CHECK(w.targets[1] == 4);
    CHECK(make_windows(std::vector<double>(60, 1.0), 5).size() == 55);
    CHECK(make_windows(ramp({2015, 1}, 48), 12).size() == 36);
    CHECK(error_kind_of([] { make_windows(std::vector<double>(5, 1.0), 5); }) == ErrorKind::insufficient_data);
}

TEST_CASE("property: window count and contents") {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 2 + rng.below(100);
        const std::size_t lookback = 1 + rng.below(n - 1);
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform();
        const auto w = make_windows(v, lookback);
        REQUIRE(w.size() == n - lookback);
        const std::size_t i = rng.below(w.size());
        REQUIRE(w.inputs[i] == std::vector<double>(v.begin() + static_cast<long>(i), v.begin() + static_cast<long>(i + lookback)));
        REQUIRE(w.targets[i] == v[i + lookback]);
    }
}

TEST_CASE("min-max scaler") {
    const auto s = fit_scaler(std::vector<double>{0, 100});
    CHECK(s.transform(50.0) == 0.5);
    CHECK(std::abs(s.inverse(s.transform(73.2)) - 73.2) <= 1e-12 * 73.2);
    const auto s2 = fit_scaler(std::vector<double>{100, 200});
    CHECK(s2.transform(250.0) == Catch::Approx(1.5).epsilon(1e-15));
    CHECK(error_kind_of([] { fit_scaler(std::vector<double>{7, 7, 7}); }) == ErrorKind::degenerate_scale);
    CHECK(error_kind_of([] { fit_scaler(std::vector<double>{7}); }) == ErrorKind::insufficient_data);
}

TEST_CASE("scaler depends on the training segment only") {
    const std::vector<double> train{3, 9, 4, 12};
    const auto a = fit_scaler(train);
    CHECK(a == Scaler{3, 12});
    CHECK(a.transform(30.0) == Catch::Approx(3.0));
}

TEST_CASE("difference examples") {
    std::vector<double> x(24);
    std::iota(x.begin(), x.end(), 1.0);
    CHECK(difference(x, 0, 0).first == x);
    const auto [w, st] = difference(x, 0, 1);
    CHECK(w == std::vector<double>(12, 12.0));
    CHECK(error_kind_of([&] { difference(std::span<const double>(x).first(12), 0, 1); }) == ErrorKind::insufficient_data);
    CHECK(error_kind_of([&] { difference(x, 3, 0); }) == ErrorKind::domain);
}

TEST_CASE("property: difference and undifference round trip") {
    Rng rng(2024);
    for (int d = 0; d <= 2; ++d) {
        for (int sd = 0; sd <= 2; ++sd) {
            for (int rep = 0; rep < 5; ++rep) {
                const std::size_t n = 50 + rng.below(50);
                std::vector<double> x(n);
                for (auto& v : x) v = rng.normal(100.0, 30.0);
                const auto [w, st] = difference(x, d, sd);
                REQUIRE(w.size() == n - static_cast<std::size_t>(d + 12 * sd));
                const auto back = undifference(w, st);
                REQUIRE(back.size() == n);
                for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(back[i] - x[i]) <= 1e-10);
            }
        }
    }
    std::vector<double> x(40);
    for (auto& v : x) v = rng.uniform(-5, 5);
    const auto [w, st] = difference(x, 1, 1);
    const auto back = undifference(w, st);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) <= 1e-10);
}
