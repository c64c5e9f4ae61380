#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cfmort/error.hpp"
#include "cfmort/nn/matrix.hpp"
#include "cfmort/rng.hpp"

namespace cfmort::nn {

/// Named parameter matrices in insertion order. Order is part of the checkpoint format.
class ParamSet {
public:
    struct Entry {
        std::string name;
        Matrix value;
        friend bool operator==(const Entry&, const Entry&) = default;
    };

    Matrix& add(const std::string& name, Matrix value) {
        if (index_.contains(name)) fail(ErrorKind::duplicate, "parameter '" + name + "' already declared");
        index_.emplace(name, entries_.size());
        entries_.push_back({name, std::move(value)});
        return entries_.back().value;
    }

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Matrix& add_uniform(const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
        Matrix m(rows, cols);
        for (auto& v : m.data()) v = rng.uniform(-bound, bound);
        return add(name, std::move(m));
    }

    bool contains(const std::string& name) const { return index_.contains(name); }
    std::size_t index_of(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) fail(ErrorKind::not_found, "unknown parameter '" + name + "'");
        return it->second;
    }
    const Matrix& operator[](const std::string& name) const { return entries_[index_of(name)].value; }
    Matrix& operator[](const std::string& name) { return entries_[index_of(name)].value; }

    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    const Entry& entry(std::size_t i) const { return entries_[i]; }
    Entry& entry(std::size_t i) { return entries_[i]; }

    friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients aligned index-for-index with a ParamSet.
using Grads = std::vector<Matrix>;

inline Grads zero_grads(const ParamSet& params) {
    Grads g;
    g.reserve(params.size());
    for (const auto& e : params.entries()) g.emplace_back(e.value.rows(), e.value.cols());
    return g;
}

inline constexpr const char* kCheckpointFormat = "cfmort-params-v1";

/// {"format": "cfmort-params-v1", "params": [{"name", "shape": [rows, cols], "values": [...]}]}
inline nlohmann::json params_to_json(const ParamSet& params) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : params.entries())
        arr.push_back({{"name", e.name}, {"shape", {e.value.rows(), e.value.cols()}}, {"values", e.value.data()}});
    return {{"format", kCheckpointFormat}, {"params", std::move(arr)}};
}

inline ParamSet params_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
        fail(ErrorKind::schema, std::string("checkpoint format must be ") + kCheckpointFormat);
    ParamSet out;
    try {
        for (const auto& p : j.at("params")) {
            const auto shape = p.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2) fail(ErrorKind::schema, "parameter shape must have two entries");
            Matrix m(shape[0], shape[1], p.at("values").get<std::vector<double>>());
            if (!m.all_finite()) fail(ErrorKind::numeric, "non-finite value in parameter " + p.at("name").get<std::string>());
            out.add(p.at("name").get<std::string>(), std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::schema, std::string("malformed checkpoint: ") + e.what());
    }
    return out;
}

inline void save_params(const ParamSet& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write " + path);
    out << params_to_json(params).dump() << '\n';
}

inline ParamSet load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read " + path);
    try {
        return params_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::parse, path + ": " + e.what());
    }
}

}  // namespace cfmort::nn
