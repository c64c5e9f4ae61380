#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfmort/calendar.hpp"
#include "cfmort/error.hpp"

namespace cfmort {

/// Inclusive calendar range.
struct MonthRange {
    YearMonth start;
    YearMonth end;

    int length() const { return months_between(start, end) + 1; }
    friend bool operator==(const MonthRange&, const MonthRange&) = default;
};

struct SplitSpec {
    MonthRange train;
    MonthRange validation;
    /// Absent for tuning-only runs.
    std::optional<MonthRange> projection;

    static constexpr int kMinTrainMonths = 24;
    static constexpr int kMinSegmentMonths = 12;

    void validate() const {
        if (train.length() < kMinTrainMonths)
            fail(ErrorKind::spec, "train segment must span at least 24 months, got " + std::to_string(train.length()));
        if (validation.length() < kMinSegmentMonths)
            fail(ErrorKind::spec, "validation segment must span at least 12 months");
        if (validation.start != train.end.plus(1))
            fail(ErrorKind::spec, "validation must start the month after train ends (" + train.end.plus(1).iso() +
                                      "), got " + validation.start.iso());
        if (projection) {
            if (projection->length() < kMinSegmentMonths)
                fail(ErrorKind::spec, "projection segment must span at least 12 months");
            if (projection->start != validation.end.plus(1))
                fail(ErrorKind::spec, "projection must start the month after validation ends (" +
                                          validation.end.plus(1).iso() + "), got " + projection->start.iso());
        }
    }
};

/// Train and validation only. Tuning code receives this type, so the projection
/// segment is not reachable from it.
struct TuningSplit {
    MonthlySeries train;
    MonthlySeries validation;
};

struct DatasetSplit {
    MonthlySeries train;
    MonthlySeries validation;
    MonthlySeries projection;  ///< may be empty

    TuningSplit masked() const { return {train, validation}; }
    MonthlySeries train_and_validation() const { return concat(train, validation); }
};

inline DatasetSplit split(const MonthlySeries& series, const SplitSpec& spec) {
    spec.validate();
    const YearMonth last = spec.projection ? spec.projection->end : spec.validation.end;
    if (!series.covers(spec.train.start) || !series.covers(last))
        fail(ErrorKind::range, "split " + spec.train.start.iso() + ".." + last.iso() + " outside series coverage " +
                                   series.start().iso() + ".." + series.end().iso());
    DatasetSplit out;
    out.train = series.slice(spec.train.start, spec.train.end);
    out.validation = series.slice(spec.validation.start, spec.validation.end);
    if (spec.projection) out.projection = series.slice(spec.projection->start, spec.projection->end);
    return out;
}

/// Sliding (input, next value) pairs in temporal order.
struct WindowSet {
    std::size_t lookback = 0;
    std::vector<std::vector<double>> inputs;
    std::vector<double> targets;

    std::size_t size() const { return targets.size(); }
};

inline WindowSet make_windows(std::span<const double> values, std::size_t lookback) {
    if (lookback < 1) fail(ErrorKind::domain, "lookback must be >= 1");
    if (values.size() <= lookback)
        fail(ErrorKind::insufficient_data, "series of length " + std::to_string(values.size()) +
                                               " too short for lookback " + std::to_string(lookback));
    WindowSet w;
    w.lookback = lookback;
    const std::size_t n = values.size() - lookback;
    w.inputs.reserve(n);
    w.targets.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        w.inputs.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(i),
                              values.begin() + static_cast<std::ptrdiff_t>(i + lookback));
        w.targets.push_back(values[i + lookback]);
    }
    return w;
}

inline WindowSet make_windows(const MonthlySeries& series, std::size_t lookback) {
    return make_windows(std::span<const double>(series.values()), lookback);
}

/// Min-max scaling fitted on a training segment. No clipping outside the fitted range.
struct Scaler {
    double min = 0.0;
    double max = 1.0;

    double transform(double x) const { return (x - min) / (max - min); }
    double inverse(double z) const { return min + z * (max - min); }

    std::vector<double> transform(std::span<const double> xs) const {
        std::vector<double> out(xs.size());
        std::transform(xs.begin(), xs.end(), out.begin(), [this](double x) { return transform(x); });
        return out;
    }
    std::vector<double> inverse(std::span<const double> zs) const {
        std::vector<double> out(zs.size());
        std::transform(zs.begin(), zs.end(), out.begin(), [this](double z) { return inverse(z); });
        return out;
    }

    friend bool operator==(const Scaler&, const Scaler&) = default;
};

inline Scaler fit_scaler(std::span<const double> train) {
    if (train.size() < 2) fail(ErrorKind::insufficient_data, "scaler needs at least 2 training values");
    const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
    if (!(*hi > *lo)) fail(ErrorKind::degenerate_scale, "constant training series cannot be min-max scaled");
    return {*lo, *hi};
}

inline Scaler fit_scaler(const MonthlySeries& train) { return fit_scaler(std::span<const double>(train.values())); }

/// Values needed to undo differencing: the leading values removed at each stage, in application order.
struct DifferenceState {
    int d = 0;
    int seasonal_d = 0;
    int period = 12;
    std::vector<std::vector<double>> heads;
};

/// Applies (1-B^s)^D then (1-B)^d.
inline std::pair<std::vector<double>, DifferenceState> difference(std::span<const double> series, int d, int seasonal_d,
                                                                  int period = 12) {
    if (d < 0 || d > 2 || seasonal_d < 0 || seasonal_d > 2) fail(ErrorKind::domain, "differencing orders must be in {0,1,2}");
    if (period < 1) fail(ErrorKind::domain, "seasonal period must be >= 1");
    if (static_cast<long>(series.size()) <= d + static_cast<long>(seasonal_d) * period)
        fail(ErrorKind::insufficient_data, "series too short for requested differencing");

    DifferenceState state{d, seasonal_d, period, {}};
    std::vector<double> x(series.begin(), series.end());
    auto stage = [&](std::size_t lag) {
        state.heads.emplace_back(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(lag));
        std::vector<double> y(x.size() - lag);
        for (std::size_t i = lag; i < x.size(); ++i) y[i - lag] = x[i] - x[i - lag];
        x = std::move(y);
    };
    for (int k = 0; k < seasonal_d; ++k) stage(static_cast<std::size_t>(period));
    for (int k = 0; k < d; ++k) stage(1);
    return {std::move(x), std::move(state)};
}

inline std::vector<double> undifference(std::span<const double> differenced, const DifferenceState& state) {
    std::vector<double> x(differenced.begin(), differenced.end());
    for (auto it = state.heads.rbegin(); it != state.heads.rend(); ++it) {
        const auto& head = *it;
        const std::size_t lag = head.size();
        std::vector<double> y(head);
        y.resize(lag + x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[lag + i] = y[i] + x[i];
        x = std::move(y);
    }
    return x;
}

}  // namespace cfmort
