#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfmort/calendar.hpp"
#include "cfmort/error.hpp"
#include "cfmort/model_config.hpp"
#include "cfmort/nn/adam.hpp"
#include "cfmort/nn/graph.hpp"
#include "cfmort/nn/layers.hpp"
#include "cfmort/projection.hpp"
#include "cfmort/rng.hpp"
#include "cfmort/sarima.hpp"
#include "cfmort/series.hpp"

namespace cfmort {

/// Min-max scaler, or [0, max(|c|, 1)] when the training series is constant at c.
inline Scaler fit_training_scaler(std::span<const double> train) {
    if (train.size() < 2) fail(ErrorKind::insufficient_data, "scaler needs at least 2 training values");
    const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
    if (*hi > *lo) return {*lo, *hi};
    return {0.0, std::max(std::abs(*lo), 1.0)};
}

struct TrainedModel {
    ModelConfig config;
    nn::ParamSet params;                 ///< empty for sarima
    std::optional<SarimaModel> sarima;   ///< set for sarima only
    Scaler scaler;
    std::vector<double> train_loss_curve;
    std::uint64_t seed = 0;
    YearMonth train_end{};

    std::size_t lookback() const { return config.family == Family::sarima ? 0 : static_cast<std::size_t>(config.lookback); }
};

namespace forecaster_detail {

inline void init_params(const ModelConfig& c, nn::ParamSet& ps, Rng& rng) {
    using namespace nn;
    switch (c.family) {
        case Family::lstm: {
            std::size_t in = 1;
            for (int layer = 0; layer < c.lstm_layers; ++layer) {
                init_lstm(ps, "lstm" + std::to_string(layer), in, static_cast<std::size_t>(c.hidden), rng);
                in = static_cast<std::size_t>(c.hidden);
            }
            init_linear(ps, "head", static_cast<std::size_t>(c.hidden), 1, rng);
            // Start the ReLU head mid-range of the scaled targets so it cannot begin dead.
            ps["head.b"][0] = 0.5;
            break;
        }
        case Family::seq2seq:
        case Family::seq2seq_attn: {
            const auto he = static_cast<std::size_t>(c.encoder_hidden), hd = static_cast<std::size_t>(c.decoder_hidden);
            const bool attn = c.family == Family::seq2seq_attn;
            init_gru(ps, "enc", 1, he, rng);
            init_linear(ps, "bridge", he, hd, rng);
            if (attn) init_bahdanau(ps, "attn", hd, he, hd, rng);
            init_gru(ps, "dec", attn ? 1 + he : 1, hd, rng);
            init_linear(ps, "head", attn ? hd + he : hd, 1, rng);
            break;
        }
        case Family::transformer: {
            const auto d = static_cast<std::size_t>(c.d_model);
            init_linear(ps, "embed", 1, d, rng);
            init_self_attention(ps, "mha", d, rng);
            init_layer_norm(ps, "ln1", d);
            init_linear(ps, "ff1", d, 4 * d, rng);
            init_linear(ps, "ff2", 4 * d, d, rng);
            init_layer_norm(ps, "ln2", d);
            init_linear(ps, "head", d, 1, rng);
            break;
        }
        case Family::sarima: break;
    }
}

/// Column t of a batch of windows as a B x 1 input.
inline nn::Var column(nn::Graph& g, const std::vector<const std::vector<double>*>& rows, std::size_t t) {
    nn::Matrix m(rows.size(), 1);
    for (std::size_t r = 0; r < rows.size(); ++r) m[r] = (*rows[r])[t];
    return g.constant(std::move(m));
}

/// B x 1 one-step predictions (scaled units) for lstm and seq2seq families.
inline nn::Var recurrent_forward(nn::Graph& g, const ModelConfig& c, const std::vector<const std::vector<double>*>& rows) {
    using namespace nn;
    const std::size_t B = rows.size(), L = static_cast<std::size_t>(c.lookback);
    if (c.family == Family::lstm) {
        std::vector<LstmState> state;
        for (int layer = 0; layer < c.lstm_layers; ++layer) {
            const auto h = static_cast<std::size_t>(c.hidden);
            state.push_back({g.constant(Matrix(B, h)), g.constant(Matrix(B, h))});
        }
        for (std::size_t t = 0; t < L; ++t) {
            Var x = column(g, rows, t);
            for (int layer = 0; layer < c.lstm_layers; ++layer) {
                state[layer] = lstm_cell(g, "lstm" + std::to_string(layer), x, state[layer]);
                x = state[layer].h;
            }
        }
        return g.relu(linear(g, "head", state.back().h));
    }

    const bool attn = c.family == Family::seq2seq_attn;
    Var h = g.constant(Matrix(B, static_cast<std::size_t>(c.encoder_hidden)));
    std::vector<Var> encoded;
    for (std::size_t t = 0; t < L; ++t) {
        h = gru_cell(g, "enc", column(g, rows, t), h);
        encoded.push_back(h);
    }
    const Var dec0 = g.tanh(linear(g, "bridge", h));
    // Teacher forcing with a single step: the decoder input is the last observed value.
    const Var last = column(g, rows, L - 1);
    if (!attn) return linear(g, "head", gru_cell(g, "dec", last, dec0));
    const auto a = bahdanau_attention(g, "attn", dec0, encoded);
    const Var dec = gru_cell(g, "dec", g.hconcat({last, a.context}), dec0);
    return linear(g, "head", g.hconcat({dec, a.context}));
}

/// L x 1 next-value predictions for one window (transformer).
inline nn::Var transformer_forward(nn::Graph& g, const ModelConfig& c, const std::vector<double>& window) {
    using namespace nn;
    const std::size_t L = window.size(), d = static_cast<std::size_t>(c.d_model);
    const Var x = g.add(linear(g, "embed", g.constant(Matrix::column(window))), g.constant(positional_encoding(L, d)));
    const Var x1 = layer_norm(g, "ln1", g.add(x, self_attention(g, "mha", x, static_cast<std::size_t>(c.heads))));
    const Var ff = linear(g, "ff2", g.relu(linear(g, "ff1", x1)));
    const Var x2 = layer_norm(g, "ln2", g.add(x1, ff));
    return linear(g, "head", x2);
}

/// Mean batch loss: MSE on the target for recurrent families, MSE over every position for the transformer.
inline nn::Var batch_loss(nn::Graph& g, const ModelConfig& c, const std::vector<const std::vector<double>*>& rows,
                          const std::vector<double>& targets) {
    using namespace nn;
    if (c.family != Family::transformer)
        return g.mse(recurrent_forward(g, c, rows), Matrix::column(targets));
    Var total{};
    for (std::size_t b = 0; b < rows.size(); ++b) {
        const auto& w = *rows[b];
        std::vector<double> shifted(w.begin() + 1, w.end());
        shifted.push_back(targets[b]);
        const Var loss = g.mse(transformer_forward(g, c, w), Matrix::column(shifted));
        total = b == 0 ? loss : g.add(total, loss);
    }
    return g.scale(total, 1.0 / static_cast<double>(rows.size()));
}

inline double predict_scaled(const TrainedModel& m, const std::vector<double>& window) {
    nn::Graph g(&m.params);
    if (m.config.family == Family::transformer) {
        const auto out = g.value(transformer_forward(g, m.config, window));
        return out[out.size() - 1];
    }
    return g.value(recurrent_forward(g, m.config, {&window}))[0];
}

}  // namespace forecaster_detail

/// Stacked one-step outputs (scaled units): B x 1 for recurrent families, (B*L) x 1 for the transformer.
inline nn::Var forecaster_outputs(nn::Graph& g, const ModelConfig& c, const std::vector<std::vector<double>>& windows) {
    std::vector<const std::vector<double>*> rows;
    for (const auto& w : windows) rows.push_back(&w);
    if (c.family != Family::transformer) return forecaster_detail::recurrent_forward(g, c, rows);
    std::vector<nn::Var> parts;
    for (const auto& w : windows) parts.push_back(forecaster_detail::transformer_forward(g, c, w));
    return g.vconcat(parts);
}

/// Training loss of a neural config on explicit windows (scaled units).
inline nn::Var forecaster_loss(nn::Graph& g, const ModelConfig& c, const std::vector<std::vector<double>>& windows,
                               const std::vector<double>& targets) {
    std::vector<const std::vector<double>*> rows;
    for (const auto& w : windows) rows.push_back(&w);
    return forecaster_detail::batch_loss(g, c, rows, targets);
}

inline nn::ParamSet init_forecaster_params(const ModelConfig& c, Rng& rng) {
    nn::ParamSet ps;
    forecaster_detail::init_params(c, ps, rng);
    return ps;
}

/**
 * Trains one model on a training series. Neural families: min-max scaling on
 * the training values, sliding windows, per-epoch shuffling with the seeded
 * generator, MSE loss and Adam for exactly `epochs` epochs. SARIMA ignores the seed.
 */
inline TrainedModel train(const ModelConfig& config, const MonthlySeries& series, std::uint64_t seed) {
    config.validate();
    TrainedModel m;
    m.config = config;
    m.seed = seed;
    m.train_end = series.end();
    if (config.family == Family::sarima) {
        m.sarima = fit_sarima(series, config.order);
        m.scaler = {};
        return m;
    }

    m.scaler = fit_training_scaler(series.values());
    const auto scaled = m.scaler.transform(std::span<const double>(series.values()));
    const auto windows = make_windows(scaled, static_cast<std::size_t>(config.lookback));

    Rng rng(seed);
    forecaster_detail::init_params(config, m.params, rng);
    nn::AdamState adam;
    adam.lr = config.learning_rate;

    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);
    const auto B = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double weighted = 0.0;
        for (std::size_t start = 0; start < order.size(); start += B) {
            const std::size_t stop = std::min(order.size(), start + B);
            std::vector<const std::vector<double>*> rows;
            std::vector<double> targets;
            for (std::size_t i = start; i < stop; ++i) {
                rows.push_back(&windows.inputs[order[i]]);
                targets.push_back(windows.targets[order[i]]);
            }
            nn::Graph g(&m.params);
            const nn::Var loss = forecaster_detail::batch_loss(g, config, rows, targets);
            const double value = g.scalar(loss);
            if (!std::isfinite(value))
                fail(ErrorKind::divergence, "non-finite training loss in epoch " + std::to_string(epoch + 1));
            g.backward(loss);
            nn::adam_step(m.params, g.param_grads(), adam);
            weighted += value * static_cast<double>(stop - start);
        }
        m.train_loss_curve.push_back(weighted / static_cast<double>(order.size()));
    }
    return m;
}

/// One-step prediction in death-count units from exactly `lookback` observed values.
inline double predict_next(const TrainedModel& m, std::span<const double> context) {
    if (m.config.family == Family::sarima) fail(ErrorKind::config, "sarima predictions come from forecast_sarima");
    if (context.size() != m.lookback())
        fail(ErrorKind::shape, "context has " + std::to_string(context.size()) + " values, lookback is " +
                                   std::to_string(m.lookback()));
    const auto window = m.scaler.transform(context);
    return std::max(0.0, m.scaler.inverse(forecaster_detail::predict_scaled(m, window)));
}

/**
 * Autoregressive multi-step path in death-count units, floored at 0.
 * Neural models take exactly `lookback` context values; SARIMA continues from its fitted history.
 */
inline std::vector<double> rollout(const TrainedModel& m, std::span<const double> context, int horizon) {
    if (horizon < 1) fail(ErrorKind::domain, "horizon must be >= 1");
    if (m.config.family == Family::sarima) {
        auto points = forecast_sarima(*m.sarima, horizon).points;
        for (auto& p : points) p = std::max(0.0, p);
        return points;
    }
    if (context.size() != m.lookback())
        fail(ErrorKind::shape, "context has " + std::to_string(context.size()) + " values, lookback is " +
                                   std::to_string(m.lookback()));
    auto window = m.scaler.transform(context);
    std::vector<double> path;
    path.reserve(static_cast<std::size_t>(horizon));
    for (int h = 0; h < horizon; ++h) {
        const double z = forecaster_detail::predict_scaled(m, window);
        path.push_back(std::max(0.0, m.scaler.inverse(z)));
        window.erase(window.begin());
        window.push_back(z);
    }
    return path;
}

/// Rollout from the last `lookback` values of a series (the whole series is history for SARIMA).
inline std::vector<double> rollout_after(const TrainedModel& m, const MonthlySeries& history, int horizon) {
    if (m.config.family == Family::sarima) {
        if (history.end() != m.train_end) fail(ErrorKind::alignment, "sarima forecasts start after its fitted history");
        return rollout(m, {}, horizon);
    }
    if (history.size() < m.lookback()) fail(ErrorKind::insufficient_data, "history shorter than the lookback");
    const auto& v = history.values();
    return rollout(m, std::span<const double>(v).subspan(v.size() - m.lookback()), horizon);
}

struct ValidationResult {
    std::vector<double> predictions;
    std::vector<double> residuals;  ///< |y - yhat|
};

/// Rolls out over the validation span and returns absolute residuals in death-count units.
inline ValidationResult validate(const TrainedModel& m, const MonthlySeries& train_tail, const MonthlySeries& validation) {
    if (train_tail.end().plus(1) != validation.start())
        fail(ErrorKind::alignment, "validation must start the month after the training context");
    ValidationResult out;
    out.predictions = rollout_after(m, train_tail, static_cast<int>(validation.size()));
    for (std::size_t i = 0; i < validation.size(); ++i)
        out.residuals.push_back(std::abs(validation[i] - out.predictions[i]));
    return out;
}

/**
 * Counterfactual path for `horizon` months after `history`. SARIMA carries its
 * analytic intervals (lower bound floored at 0); neural paths come back with
 * degenerate intervals for the conformal step to fill.
 */
inline ProjectionResult project(const TrainedModel& m, const MonthlySeries& history, int horizon) {
    ProjectionResult r;
    r.start = history.end().plus(1);
    if (m.config.family == Family::sarima) {
        if (history.end() != m.train_end) fail(ErrorKind::alignment, "sarima forecasts start after its fitted history");
        r = forecast_sarima(*m.sarima, horizon);
        r.start = history.end().plus(1);
        for (auto& v : r.points) v = std::max(0.0, v);
        for (auto& v : r.lower) v = std::max(0.0, v);
        for (auto& v : r.upper) v = std::max(0.0, v);
        return r;
    }
    r.points = rollout_after(m, history, horizon);
    r.lower = r.points;
    r.upper = r.points;
    return r;
}

}  // namespace cfmort
