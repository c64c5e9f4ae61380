#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace cfmort {

struct NelderMeadOptions {
    double initial_step = 0.1;
    double ftol = 1e-10;  ///< relative spread of simplex values
    double xtol = 1e-7;   ///< simplex diameter, relative to the best vertex
    double fatol = 0.0;   ///< a simplex flatter than this counts as converged regardless of its diameter
    int max_iterations = 20000;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Derivative-free simplex minimizer (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
inline NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                                    const NelderMeadOptions& opts = {}) {
    const std::size_t n = start.size();
    NelderMeadResult result;
    if (n == 0) {
        result.value = f(start);
        result.evaluations = 1;
        result.converged = true;
        return result;
    }

    std::vector<std::vector<double>> simplex(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) {
        const double step = start[i] != 0.0 ? opts.initial_step * std::max(1.0, std::abs(start[i])) : opts.initial_step;
        simplex[i + 1][i] += step;
    }
    std::vector<double> values(n + 1);
    auto eval = [&](const std::vector<double>& x) {
        ++result.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::max();
    };
    for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);
    auto point_along = [&](double coef, const std::vector<double>& worst, std::vector<double>& out) {
        for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + coef * (worst[j] - centroid[j]);
    };

    for (result.iterations = 0; result.iterations < opts.max_iterations; ++result.iterations) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

        const double fspread = std::abs(values[worst] - values[best]);
        double diameter = 0.0, scale = 1.0;
        for (std::size_t i = 0; i <= n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                diameter = std::max(diameter, std::abs(simplex[i][j] - simplex[best][j]));
                scale = std::max(scale, std::abs(simplex[best][j]));
            }
        }
        const bool flat = fspread <= opts.ftol * (std::abs(values[best]) + std::abs(values[worst])) + 1e-300;
        if ((flat && diameter <= opts.xtol * scale) || fspread < opts.fatol) {
            result.converged = true;
            break;
        }

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / static_cast<double>(n);
        }

        point_along(-1.0, simplex[worst], trial);
        const double f_reflect = eval(trial);
        if (f_reflect < values[best]) {
            point_along(-2.0, simplex[worst], trial2);
            const double f_expand = eval(trial2);
            if (f_expand < f_reflect) {
                simplex[worst] = trial2;
                values[worst] = f_expand;
            } else {
                simplex[worst] = trial;
                values[worst] = f_reflect;
            }
            continue;
        }
        if (f_reflect < values[second]) {
            simplex[worst] = trial;
            values[worst] = f_reflect;
            continue;
        }
        // Contraction: outside if the reflection improved on the worst vertex, inside otherwise.
        const bool outside = f_reflect < values[worst];
        point_along(outside ? -0.5 : 0.5, simplex[worst], trial2);
        const double f_contract = eval(trial2);
        if (f_contract < (outside ? f_reflect : values[worst])) {
            simplex[worst] = trial2;
            values[worst] = f_contract;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t j = 0; j < n; ++j) simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
            values[i] = eval(simplex[i]);
        }
    }

    const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    result.x = simplex[best];
    result.value = values[best];
    return result;
}

}  // namespace cfmort
