#pragma once

#include <cmath>
#include <span>
#include <string>

#include "cfmort/error.hpp"

namespace cfmort {

namespace detail {
inline void check_pair(std::span<const double> obs, std::span<const double> pred) {
    if (obs.size() != pred.size())
        fail(ErrorKind::shape, "length mismatch: " + std::to_string(obs.size()) + " observed vs " +
                                   std::to_string(pred.size()) + " predicted");
    if (obs.empty()) fail(ErrorKind::empty, "metrics need at least one point");
}
}  // namespace detail

inline double rmse(std::span<const double> obs, std::span<const double> pred) {
    detail::check_pair(obs, pred);
    double s = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) s += (obs[i] - pred[i]) * (obs[i] - pred[i]);
    return std::sqrt(s / static_cast<double>(obs.size()));
}

inline double mae(std::span<const double> obs, std::span<const double> pred) {
    detail::check_pair(obs, pred);
    double s = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) s += std::abs(obs[i] - pred[i]);
    return s / static_cast<double>(obs.size());
}

/// Percent. Zero observations are rejected.
inline double mape(std::span<const double> obs, std::span<const double> pred) {
    detail::check_pair(obs, pred);
    double s = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (!(obs[i] > 0.0)) fail(ErrorKind::domain, "MAPE undefined for non-positive observation at index " + std::to_string(i));
        s += std::abs(obs[i] - pred[i]) / obs[i];
    }
    return 100.0 * s / static_cast<double>(obs.size());
}

}  // namespace cfmort
