#pragma once

#include <cmath>

#include "cfmort/error.hpp"
#include "cfmort/nn/params.hpp"

namespace cfmort::nn {

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    Grads m;
    Grads v;
};

/// One bias-corrected Adam update. Accumulators are created on the first call.
inline void adam_step(ParamSet& params, const Grads& grads, AdamState& state) {
    if (grads.size() != params.size()) fail(ErrorKind::shape, "gradient count does not match parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        params.entry(i).value.require_same(grads[i], params.entry(i).name.c_str());
        if (!grads[i].all_finite()) fail(ErrorKind::numeric, "non-finite gradient for parameter " + params.entry(i).name);
    }
    if (state.m.empty()) {
        state.m = zero_grads(params);
        state.v = zero_grads(params);
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& w = params.entry(i).value.data();
        const auto& g = grads[i].data();
        auto& m = state.m[i].data();
        auto& v = state.v[i].data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            w[k] -= state.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
        }
    }
}

}  // namespace cfmort::nn
