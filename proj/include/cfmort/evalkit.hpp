#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cfmort/calendar.hpp"
#include "cfmort/error.hpp"
#include "cfmort/metrics.hpp"
#include "cfmort/projection.hpp"

namespace cfmort {

/// Empirical (1 - alpha) quantile of absolute residuals, linear between order statistics.
inline double conformal_radius(std::span<const double> residuals, double alpha = 0.05) {
    if (residuals.size() < 2) fail(ErrorKind::insufficient_data, "conformal radius needs at least 2 residuals");
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::domain, "alpha must lie in (0, 1)");
    std::vector<double> sorted(residuals.begin(), residuals.end());
    for (double r : sorted)
        if (!(r >= 0.0)) fail(ErrorKind::domain, "residuals must be nonnegative");
    std::sort(sorted.begin(), sorted.end());
    const double h = (1.0 - alpha) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// [max(0, p - q), p + q] around every point.
inline ProjectionResult apply_intervals(YearMonth start, std::span<const double> points, double q) {
    if (!(q >= 0.0)) fail(ErrorKind::domain, "interval radius must be >= 0");
    ProjectionResult r;
    r.start = start;
    r.points.assign(points.begin(), points.end());
    for (double p : points) {
        r.lower.push_back(std::max(0.0, p - q));
        r.upper.push_back(p + q);
    }
    return r;
}

inline ProjectionResult apply_intervals(const ProjectionResult& path, double q) {
    return apply_intervals(path.start, path.points, q);
}

/// Percent of observations inside [lower, upper], bounds inclusive.
inline double pi_coverage(std::span<const double> obs, const ProjectionResult& r) {
    if (obs.size() != r.size() || r.lower.size() != r.size() || r.upper.size() != r.size())
        fail(ErrorKind::shape, "coverage needs observations aligned with the intervals");
    if (obs.empty()) fail(ErrorKind::empty, "coverage of an empty span");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < obs.size(); ++i)
        if (r.lower[i] <= obs[i] && obs[i] <= r.upper[i]) ++inside;
    return 100.0 * static_cast<double>(inside) / static_cast<double>(obs.size());
}

inline double pi_width(const ProjectionResult& r) {
    if (r.size() == 0) fail(ErrorKind::empty, "width of an empty projection");
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r.upper[i] - r.lower[i];
    return s / static_cast<double>(r.size());
}

struct MetricsReport {
    double rmse = 0.0;
    double mae = 0.0;
    double mape = 0.0;         ///< percent
    double pi_coverage = 0.0;  ///< percent
    double pi_width = 0.0;
    std::size_t n = 0;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline MetricsReport evaluate(std::span<const double> obs, const ProjectionResult& r) {
    MetricsReport m;
    m.rmse = rmse(obs, r.points);
    m.mae = mae(obs, r.points);
    m.mape = mape(obs, r.points);
    m.pi_coverage = pi_coverage(obs, r);
    m.pi_width = pi_width(r);
    m.n = obs.size();
    return m;
}

/// Observed values over exactly the months of `r`.
inline std::vector<double> aligned_observations(const MonthlySeries& obs, const ProjectionResult& r) {
    if (r.size() == 0) fail(ErrorKind::empty, "empty projection");
    const YearMonth last = r.month_at(r.size() - 1);
    if (!obs.covers(r.start) || !obs.covers(last))
        fail(ErrorKind::alignment, "observations " + obs.start().iso() + ".." + obs.end().iso() + " do not cover " +
                                       r.start.iso() + ".." + last.iso());
    return obs.slice(r.start, last).values();
}

inline MetricsReport evaluate(const MonthlySeries& obs, const ProjectionResult& r) {
    const auto values = aligned_observations(obs, r);
    return evaluate(std::span<const double>(values), r);
}

struct ExcessMonth {
    YearMonth month;
    double observed = 0.0;
    double counterfactual = 0.0;
    double delta = 0.0;
};

struct ExcessReport {
    std::vector<ExcessMonth> monthly;
    double cumulative = 0.0;        ///< in-order sum of the monthly deltas
    double share_outside_pi = 0.0;  ///< fraction in [0, 1]
};

/// Monthly observed minus counterfactual over the projection months; `obs` must start where `r` starts.
inline ExcessReport excess(const MonthlySeries& obs, const ProjectionResult& r) {
    if (obs.start() != r.start || obs.size() != r.size())
        fail(ErrorKind::alignment, "observed " + obs.start().iso() + " (" + std::to_string(obs.size()) +
                                       " months) vs projection " + r.start.iso() + " (" + std::to_string(r.size()) +
                                       " months)");
    ExcessReport out;
    std::size_t outside = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double delta = obs[i] - r.points[i];
        out.monthly.push_back({r.month_at(i), obs[i], r.points[i], delta});
        out.cumulative += delta;
        if (obs[i] < r.lower[i] || obs[i] > r.upper[i]) ++outside;
    }
    out.share_outside_pi = r.size() ? static_cast<double>(outside) / static_cast<double>(r.size()) : 0.0;
    return out;
}

inline constexpr std::array<int, 4> kDefaultHorizons{12, 24, 36, 48};

/// Metrics over the first k months for each k.
inline std::map<int, MetricsReport> horizon_slices(std::span<const double> obs, const ProjectionResult& r,
                                                   std::span<const int> horizons = kDefaultHorizons) {
    std::map<int, MetricsReport> out;
    for (int k : horizons) {
        if (k < 1 || static_cast<std::size_t>(k) > r.size() || static_cast<std::size_t>(k) > obs.size())
            fail(ErrorKind::range, "horizon " + std::to_string(k) + " exceeds the projection length " +
                                       std::to_string(r.size()));
        ProjectionResult head;
        head.start = r.start;
        head.level = r.level;
        const auto n = static_cast<std::ptrdiff_t>(k);
        head.points.assign(r.points.begin(), r.points.begin() + n);
        head.lower.assign(r.lower.begin(), r.lower.begin() + n);
        head.upper.assign(r.upper.begin(), r.upper.begin() + n);
        out.emplace(k, evaluate(obs.first(static_cast<std::size_t>(k)), head));
    }
    return out;
}

}  // namespace cfmort
