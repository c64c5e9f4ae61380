#pragma once

#include <vector>

#include "cfmort/calendar.hpp"

namespace cfmort {

/// Counterfactual path with symmetric per-step intervals, in death-count units.
struct ProjectionResult {
    YearMonth start{};
    std::vector<double> points;
    std::vector<double> lower;
    std::vector<double> upper;
    double level = 0.95;

    std::size_t size() const { return points.size(); }
    YearMonth month_at(std::size_t i) const { return start.plus(static_cast<int>(i)); }

    friend bool operator==(const ProjectionResult&, const ProjectionResult&) = default;
};

}  // namespace cfmort
