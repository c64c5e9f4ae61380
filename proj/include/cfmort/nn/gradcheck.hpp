#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cfmort/nn/graph.hpp"
#include "cfmort/nn/params.hpp"

namespace cfmort::nn {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    double max_rel_error() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_error);
        return m;
    }
    bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Builds a scalar loss on a graph bound to the given parameters.
using LossBuilder = std::function<Var(Graph&)>;

inline double evaluate_loss(const LossBuilder& build, const ParamSet& params) {
    Graph g(&params);
    return g.scalar(build(g));
}

inline Grads analytic_grads(const LossBuilder& build, const ParamSet& params) {
    Graph g(&params);
    const Var loss = build(g);
    g.backward(loss);
    return g.param_grads();
}

/// Compares supplied gradients against central differences of `f`, every scalar parameter.
inline GradCheckReport grad_check(const std::function<double(const ParamSet&)>& f, ParamSet params,
                                  const Grads& analytic, double step = 1e-5) {
    GradCheckReport report;
    for (std::size_t p = 0; p < params.size(); ++p) {
        GradCheckEntry entry{params.entry(p).name};
        auto& w = params.entry(p).value.data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double saved = w[k];
            w[k] = saved + step;
            const double up = f(params);
            w[k] = saved - step;
            const double down = f(params);
            w[k] = saved;
            const double err = relative_error(analytic[p][k], (up - down) / (2.0 * step));
            if (err > entry.max_rel_error) {
                entry.max_rel_error = err;
                entry.worst_index = k;
            }
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

inline GradCheckReport grad_check(const LossBuilder& build, const ParamSet& params, double step = 1e-5) {
    return grad_check([&](const ParamSet& ps) { return evaluate_loss(build, ps); }, params,
                      analytic_grads(build, params), step);
}

}  // namespace cfmort::nn
