#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cfmort/error.hpp"
#include "cfmort/nn/graph.hpp"
#include "cfmort/nn/params.hpp"
#include "cfmort/rng.hpp"

namespace cfmort::nn {

// Parameters live in a ParamSet under "<prefix>.<name>"; each layer has an
// init_* that declares them and a forward function that reads them from a Graph.

inline void init_linear(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    ps.add_uniform(prefix + ".W", in, out, in, rng);
    ps.add_uniform(prefix + ".b", 1, out, in, rng);
}

inline Var linear(Graph& g, const std::string& prefix, Var x) {
    return g.add_row(g.matmul(x, g.param(prefix + ".W")), g.param(prefix + ".b"));
}

namespace layer_detail {
inline Var gate(Graph& g, const std::string& prefix, const char* tag, Var x, Var h) {
    const std::string t(tag);
    return g.add_row(g.add(g.matmul(x, g.param(prefix + ".W_" + t)), g.matmul(h, g.param(prefix + ".U_" + t))),
                     g.param(prefix + ".b_" + t));
}

inline void init_gates(ParamSet& ps, const std::string& prefix, std::initializer_list<const char*> tags, std::size_t in,
                       std::size_t hidden, Rng& rng) {
    for (const char* tag : tags) {
        const std::string t(tag);
        ps.add_uniform(prefix + ".W_" + t, in, hidden, in, rng);
        ps.add_uniform(prefix + ".U_" + t, hidden, hidden, hidden, rng);
        ps.add_uniform(prefix + ".b_" + t, 1, hidden, hidden, rng);
    }
}

inline void require_state(const Graph& g, Var x, Var h, std::size_t hidden_rows, const char* what) {
    if (g.value(x).rows() != g.value(h).rows() || g.value(h).rows() != hidden_rows)
        fail(ErrorKind::shape, std::string(what) + ": batch sizes of input and state differ");
}
}  // namespace layer_detail

struct LstmState {
    Var h;
    Var c;
};

inline void init_lstm(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng) {
    layer_detail::init_gates(ps, prefix, {"i", "f", "g", "o"}, in, hidden, rng);
}

/// i, f, o = sigmoid(x W + h U + b); g = tanh(...); c' = f*c + i*g; h' = o*tanh(c').
inline LstmState lstm_cell(Graph& g, const std::string& prefix, Var x, LstmState prev) {
    using layer_detail::gate;
    layer_detail::require_state(g, x, prev.h, g.value(prev.c).rows(), "lstm_cell");
    if (!g.value(prev.h).same_shape(g.value(prev.c))) fail(ErrorKind::shape, "lstm_cell: h and c shapes differ");
    const Var i = g.sigmoid(gate(g, prefix, "i", x, prev.h));
    const Var f = g.sigmoid(gate(g, prefix, "f", x, prev.h));
    const Var cand = g.tanh(gate(g, prefix, "g", x, prev.h));
    const Var o = g.sigmoid(gate(g, prefix, "o", x, prev.h));
    const Var c = g.add(g.hadamard(f, prev.c), g.hadamard(i, cand));
    return {g.hadamard(o, g.tanh(c)), c};
}

inline void init_gru(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng) {
    layer_detail::init_gates(ps, prefix, {"z", "r", "h"}, in, hidden, rng);
}

/// z, r = sigmoid(...); n = tanh(x W_h + (r*h) U_h + b_h); h' = (1-z)*h + z*n.
inline Var gru_cell(Graph& g, const std::string& prefix, Var x, Var h_prev) {
    using layer_detail::gate;
    layer_detail::require_state(g, x, h_prev, g.value(h_prev).rows(), "gru_cell");
    const Var z = g.sigmoid(gate(g, prefix, "z", x, h_prev));
    const Var r = g.sigmoid(gate(g, prefix, "r", x, h_prev));
    const Var n = g.tanh(gate(g, prefix, "h", x, g.hadamard(r, h_prev)));
    return g.add(g.hadamard(g.one_minus(z), h_prev), g.hadamard(z, n));
}

inline void init_bahdanau(ParamSet& ps, const std::string& prefix, std::size_t query_dim, std::size_t key_dim,
                          std::size_t attn_dim, Rng& rng) {
    ps.add_uniform(prefix + ".W_q", query_dim, attn_dim, query_dim, rng);
    ps.add_uniform(prefix + ".W_k", key_dim, attn_dim, key_dim, rng);
    ps.add_uniform(prefix + ".v", attn_dim, 1, attn_dim, rng);
}

struct Attention {
    Var context;  ///< B x key_dim
    Var weights;  ///< B x n_keys, rows sum to 1
};

/// Additive attention: score_j = v' tanh(q W_q + k_j W_k), weights = softmax(score), context = sum_j w_j k_j.
inline Attention bahdanau_attention(Graph& g, const std::string& prefix, Var query, const std::vector<Var>& keys) {
    if (keys.empty()) fail(ErrorKind::domain, "attention over an empty key set");
    const Var q = g.matmul(query, g.param(prefix + ".W_q"));
    const Var wk = g.param(prefix + ".W_k");
    const Var v = g.param(prefix + ".v");
    std::vector<Var> scores;
    scores.reserve(keys.size());
    for (Var k : keys) {
        if (g.value(k).rows() != g.value(query).rows()) fail(ErrorKind::shape, "attention: key batch differs from query");
        scores.push_back(g.matmul(g.tanh(g.add(q, g.matmul(k, wk))), v));
    }
    const Var weights = g.softmax_rows(g.hconcat(scores));
    Var context = g.mul_colwise(g.slice_cols(weights, 0, 1), keys[0]);
    for (std::size_t j = 1; j < keys.size(); ++j)
        context = g.add(context, g.mul_colwise(g.slice_cols(weights, j, 1), keys[j]));
    return {context, weights};
}

inline void init_self_attention(ParamSet& ps, const std::string& prefix, std::size_t d_model, Rng& rng) {
    for (const char* name : {".Wq", ".Wk", ".Wv", ".Wo"}) ps.add_uniform(prefix + name, d_model, d_model, d_model, rng);
}

/// Causal scaled dot-product self-attention over one sequence X (L x d); heads split the model dimension.
inline Var self_attention(Graph& g, const std::string& prefix, Var x, std::size_t heads) {
    const std::size_t d = g.value(x).cols();
    if (heads == 0 || d % heads != 0)
        fail(ErrorKind::config, "model dimension " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                                    " heads");
    const std::size_t dh = d / heads;
    const Var q = g.matmul(x, g.param(prefix + ".Wq"));
    const Var k = g.matmul(x, g.param(prefix + ".Wk"));
    const Var v = g.matmul(x, g.param(prefix + ".Wv"));
    std::vector<Var> outs;
    for (std::size_t h = 0; h < heads; ++h) {
        const Var qh = g.slice_cols(q, h * dh, dh);
        const Var kh = g.slice_cols(k, h * dh, dh);
        const Var vh = g.slice_cols(v, h * dh, dh);
        const Var scores = g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        outs.push_back(g.matmul(g.softmax_rows(scores, true), vh));
    }
    const Var merged = heads == 1 ? outs[0] : g.hconcat(outs);
    return g.matmul(merged, g.param(prefix + ".Wo"));
}

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
inline Matrix positional_encoding(std::size_t length, std::size_t d_model) {
    if (d_model % 2 != 0) fail(ErrorKind::config, "positional encoding needs an even model dimension");
    Matrix pe(length, d_model);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < d_model / 2; ++i) {
            const double angle = static_cast<double>(pos) /
                                 std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
            pe(pos, 2 * i) = std::sin(angle);
            pe(pos, 2 * i + 1) = std::cos(angle);
        }
    }
    return pe;
}

inline void init_layer_norm(ParamSet& ps, const std::string& prefix, std::size_t width) {
    ps.add(prefix + ".gain", Matrix(1, width, 1.0));
    ps.add(prefix + ".shift", Matrix(1, width, 0.0));
}

inline Var layer_norm(Graph& g, const std::string& prefix, Var x) {
    return g.layer_norm(x, g.param(prefix + ".gain"), g.param(prefix + ".shift"));
}

}  // namespace cfmort::nn
