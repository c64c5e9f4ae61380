#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cfmort {

/// Category of a failure raised anywhere in the engine.
enum class ErrorKind {
    parse,
    schema,
    duplicate,
    suppression,
    gap,
    empty,
    too_short,
    range,
    spec,
    insufficient_data,
    degenerate_scale,
    convergence,
    domain,
    shape,
    numeric,
    config,
    divergence,
    exhaustion,
    alignment,
    not_found,
    io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::schema: return "schema";
    case ErrorKind::duplicate: return "duplicate";
    case ErrorKind::suppression: return "suppression";
    case ErrorKind::gap: return "gap";
    case ErrorKind::empty: return "empty";
    case ErrorKind::too_short: return "too_short";
    case ErrorKind::range: return "range";
    case ErrorKind::spec: return "spec";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::degenerate_scale: return "degenerate_scale";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::domain: return "domain";
    case ErrorKind::shape: return "shape";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::config: return "config";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::exhaustion: return "exhaustion";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace cfmort
