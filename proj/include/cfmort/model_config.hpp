#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfmort/error.hpp"
#include "cfmort/sarima.hpp"

namespace cfmort {

enum class Family { sarima, lstm, seq2seq, seq2seq_attn, transformer };

inline constexpr std::array<Family, 5> kAllFamilies{Family::sarima, Family::lstm, Family::seq2seq, Family::seq2seq_attn,
                                                    Family::transformer};

inline const char* to_string(Family f) {
    switch (f) {
        case Family::sarima: return "sarima";
        case Family::lstm: return "lstm";
        case Family::seq2seq: return "seq2seq";
        case Family::seq2seq_attn: return "seq2seq_attn";
        case Family::transformer: return "transformer";
    }
    return "?";
}

inline Family parse_family(std::string_view name) {
    for (Family f : kAllFamilies)
        if (name == to_string(f)) return f;
    fail(ErrorKind::config, "unknown model family '" + std::string(name) + "'");
}

inline bool is_neural(Family f) { return f != Family::sarima; }

/// Display name used in report tables.
inline const char* display_name(Family f) {
    switch (f) {
        case Family::sarima: return "SARIMA";
        case Family::lstm: return "LSTM";
        case Family::seq2seq: return "Seq2Seq";
        case Family::seq2seq_attn: return "Seq2Seq w/ Attn.";
        case Family::transformer: return "Transformer";
    }
    return "?";
}

inline constexpr std::array<int, 6> kLookbackGrid{3, 5, 7, 9, 11, 12};
inline constexpr std::array<int, 3> kBatchGrid{8, 16, 32};
inline constexpr std::array<int, 2> kEpochGrid{50, 100};
inline constexpr std::array<int, 2> kHiddenGrid{64, 128};
inline constexpr std::array<int, 2> kHeadGrid{1, 2};
inline constexpr int kTransformerWidth = 64;

struct ModelConfig {
    Family family = Family::lstm;
    int lookback = 5;
    int batch_size = 8;
    int epochs = 50;
    int hidden = 64;           ///< lstm
    int lstm_layers = 2;
    int encoder_hidden = 64;   ///< seq2seq families
    int decoder_hidden = 64;
    int d_model = kTransformerWidth;
    int heads = 2;
    SarimaOrder order{1, 0, 0, 1, 1, 1};
    double learning_rate = 1e-3;
    /// Strict configs only take values from the tuning grids; relaxed ones allow toy sizes.
    bool strict = true;

    void validate() const {
        if (family == Family::sarima) {
            order.validate();
            return;
        }
        auto in = [](int v, const auto& grid) { return std::find(grid.begin(), grid.end(), v) != grid.end(); };
        auto check = [&](bool ok, const std::string& what) {
            if (!ok) fail(ErrorKind::config, to_string(family) + std::string(": ") + what);
        };
        check(lookback >= 1 && batch_size >= 1 && epochs >= 1, "lookback, batch size and epochs must be positive");
        check(learning_rate > 0.0, "learning rate must be positive");
        switch (family) {
            case Family::lstm: check(hidden >= 1 && lstm_layers >= 1, "hidden size and layer count must be positive"); break;
            case Family::seq2seq:
            case Family::seq2seq_attn: check(encoder_hidden >= 1 && decoder_hidden >= 1, "hidden sizes must be positive"); break;
            case Family::transformer:
                check(heads >= 1 && d_model >= 2 && d_model % 2 == 0, "model width must be even and heads positive");
                check(d_model % heads == 0, "model width " + std::to_string(d_model) + " is not divisible by " +
                                                std::to_string(heads) + " heads");
                break;
            case Family::sarima: break;
        }
        if (!strict) return;
        check(in(lookback, kLookbackGrid), "lookback " + std::to_string(lookback) + " is not in {3,5,7,9,11,12}");
        check(in(batch_size, kBatchGrid), "batch size " + std::to_string(batch_size) + " is not in {8,16,32}");
        check(in(epochs, kEpochGrid), "epochs " + std::to_string(epochs) + " is not in {50,100}");
        switch (family) {
            case Family::lstm: check(in(hidden, kHiddenGrid) && lstm_layers == 2, "hidden must be 64 or 128 with 2 layers"); break;
            case Family::seq2seq:
            case Family::seq2seq_attn:
                check(in(encoder_hidden, kHiddenGrid) && in(decoder_hidden, kHiddenGrid),
                      "encoder and decoder sizes must be 64 or 128");
                break;
            case Family::transformer:
                check(d_model == kTransformerWidth && in(heads, kHeadGrid), "transformer needs d=64 and 1 or 2 heads");
                break;
            case Family::sarima: break;
        }
    }

    /// Short human-readable identity used in leaderboards and file names.
    std::string label() const {
        if (family == Family::sarima) return "sarima" + order.to_string();
        std::string s = std::string(to_string(family)) + "_L" + std::to_string(lookback) + "_B" +
                        std::to_string(batch_size) + "_E" + std::to_string(epochs);
        switch (family) {
            case Family::lstm: s += "_H" + std::to_string(hidden); break;
            case Family::seq2seq:
            case Family::seq2seq_attn: s += "_enc" + std::to_string(encoder_hidden) + "_dec" + std::to_string(decoder_hidden); break;
            case Family::transformer: s += "_d" + std::to_string(d_model) + "_h" + std::to_string(heads); break;
            case Family::sarima: break;
        }
        return s;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// The configurations selected in the published study.
inline ModelConfig published_config(Family f) {
    ModelConfig c;
    c.family = f;
    switch (f) {
        case Family::sarima: break;
        case Family::lstm: c.lookback = 5, c.batch_size = 8, c.epochs = 50, c.hidden = 64; break;
        case Family::seq2seq: c.lookback = 7, c.batch_size = 16, c.epochs = 100, c.encoder_hidden = 64, c.decoder_hidden = 64; break;
        case Family::seq2seq_attn:
            c.lookback = 5, c.batch_size = 16, c.epochs = 50, c.encoder_hidden = 128, c.decoder_hidden = 64;
            break;
        case Family::transformer: c.lookback = 7, c.batch_size = 32, c.epochs = 100, c.heads = 2; break;
    }
    return c;
}

/// The tuning grid of a neural family in a fixed order. LSTM width stays at its published 64.
inline std::vector<ModelConfig> full_grid(Family f) {
    if (f == Family::sarima) fail(ErrorKind::config, "the sarima grid is a list of orders, see full_sarima_grid");
    std::vector<ModelConfig> out;
    for (int L : kLookbackGrid)
        for (int B : kBatchGrid)
            for (int E : kEpochGrid) {
                ModelConfig c = published_config(f);
                c.lookback = L, c.batch_size = B, c.epochs = E;
                switch (f) {
                    case Family::lstm: out.push_back(c); break;
                    case Family::seq2seq:
                    case Family::seq2seq_attn:
                        for (int e : kHiddenGrid)
                            for (int d : kHiddenGrid) out.push_back((c.encoder_hidden = e, c.decoder_hidden = d, c));
                        break;
                    case Family::transformer:
                        for (int h : kHeadGrid) out.push_back((c.heads = h, c));
                        break;
                    case Family::sarima: break;
                }
            }
    return out;
}

inline nlohmann::json to_json(const SarimaOrder& o) { return {o.p, o.d, o.q, o.P, o.D, o.Q}; }

inline SarimaOrder sarima_order_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<int>>();
    if (v.size() != 6) fail(ErrorKind::config, "sarima order needs six entries [p,d,q,P,D,Q]");
    SarimaOrder o{v[0], v[1], v[2], v[3], v[4], v[5]};
    o.validate();
    return o;
}

inline nlohmann::json to_json(const ModelConfig& c) {
    nlohmann::json j{{"family", to_string(c.family)}};
    if (c.family == Family::sarima) {
        j["order"] = to_json(c.order);
        return j;
    }
    j["lookback"] = c.lookback;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    switch (c.family) {
        case Family::lstm: j["hidden"] = c.hidden, j["layers"] = c.lstm_layers; break;
        case Family::seq2seq:
        case Family::seq2seq_attn: j["encoder_hidden"] = c.encoder_hidden, j["decoder_hidden"] = c.decoder_hidden; break;
        case Family::transformer: j["d_model"] = c.d_model, j["heads"] = c.heads; break;
        case Family::sarima: break;
    }
    j["learning_rate"] = c.learning_rate;
    j["strict"] = c.strict;
    return j;
}

/// Missing keys take the published configuration of the family.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    try {
        ModelConfig c = published_config(parse_family(j.at("family").get<std::string>()));
        if (j.contains("order")) c.order = sarima_order_from_json(j.at("order"));
        c.lookback = j.value("lookback", c.lookback);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.hidden = j.value("hidden", c.hidden);
        c.lstm_layers = j.value("layers", c.lstm_layers);
        c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
        c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
        c.d_model = j.value("d_model", c.d_model);
        c.heads = j.value("heads", c.heads);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.strict = j.value("strict", c.strict);
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, std::string("model config: ") + e.what());
    }
}

}  // namespace cfmort
