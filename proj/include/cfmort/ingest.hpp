#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cfmort/calendar.hpp"
#include "cfmort/error.hpp"
#include "cfmort/format.hpp"
#include "cfmort/rng.hpp"

namespace cfmort {

/// Stratum dimension name -> category label. Empty for national totals.
using Stratum = std::map<std::string, std::string>;

/// One data row of a WONDER export. `deaths` is empty when the cell is "Suppressed".
struct WonderRecord {
    int year = 0;
    int month = 0;
    Stratum stratum;
    std::optional<std::int64_t> deaths;

    bool suppressed() const { return !deaths.has_value(); }
    YearMonth when() const { return {year, month}; }

    friend bool operator==(const WonderRecord&, const WonderRecord&) = default;
};

struct StratifiedDataset {
    std::vector<WonderRecord> records;
    std::vector<std::string> dimensions;
    std::string provenance;

    friend bool operator==(const StratifiedDataset& a, const StratifiedDataset& b) {
        return a.records == b.records && a.dimensions == b.dimensions;
    }
};

enum class SuppressionMode { fail, zero, midpoint };

struct SuppressionPolicy {
    SuppressionMode mode = SuppressionMode::fail;

    /// Substitute for a suppressed cell (1-9 range).
    static constexpr std::int64_t kMidpoint = 5;
};

inline SuppressionMode parse_suppression_mode(std::string_view text) {
    if (text == "fail") return SuppressionMode::fail;
    if (text == "zero") return SuppressionMode::zero;
    if (text == "midpoint") return SuppressionMode::midpoint;
    fail(ErrorKind::config, "unknown suppression mode '" + std::string(text) + "' (fail|zero|midpoint)");
}

namespace detail {

inline const std::vector<std::string>& dimension_columns(const std::string& dimension) {
    static const std::map<std::string, std::vector<std::string>> columns{
        {"age", {"Ten-Year Age Groups", "Five-Year Age Groups", "Single-Year Ages", "Age Group", "Age"}},
        {"sex", {"Sex", "Gender"}},
        {"state", {"State", "Residence State", "Occurrence State"}},
    };
    const auto it = columns.find(dimension);
    if (it == columns.end())
        fail(ErrorKind::schema, "unsupported stratum dimension '" + dimension + "' (age|sex|state)");
    return it->second;
}

inline std::string unquote(std::string_view field) {
    field = trim(field);
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"') field = field.substr(1, field.size() - 2);
    return std::string(field);
}

inline std::string stratum_label(const Stratum& s) {
    if (s.empty()) return "national";
    std::string out;
    for (const auto& [k, v] : s) {
        if (!out.empty()) out += ",";
        out += k + "=" + v;
    }
    return out;
}

inline std::string record_key(const WonderRecord& r) {
    return YearMonth{r.year, r.month}.iso() + " [" + stratum_label(r.stratum) + "]";
}

}  // namespace detail

/**
 * Parses a tab-delimited CDC WONDER export.
 *
 * Requires "Month Code" (YYYY/MM) and "Deaths" columns plus one column per
 * requested dimension. Rows whose "Notes" cell is nonempty (totals, footnotes)
 * are skipped, as are blank lines. "Suppressed" deaths are kept as markers.
 */
inline StratifiedDataset parse_wonder_export(std::string_view text, const std::vector<std::string>& dimensions,
                                             std::string provenance = "CDC WONDER export") {
    const auto lines = lines_of(text);
    std::size_t header_line = 0;
    while (header_line < lines.size() && trim(lines[header_line]).empty()) ++header_line;
    if (header_line == lines.size()) fail(ErrorKind::schema, "export has no header row");

    std::vector<std::string> header;
    for (const auto& f : split(lines[header_line], '\t')) header.push_back(detail::unquote(f));

    auto find_column = [&](std::string_view name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    };

    const auto notes_col = find_column("Notes");
    const auto month_col = find_column("Month Code");
    const auto deaths_col = find_column("Deaths");
    if (!month_col) fail(ErrorKind::schema, "missing required column 'Month Code'");
    if (!deaths_col) fail(ErrorKind::schema, "missing required column 'Deaths'");

    std::vector<std::size_t> dim_cols;
    std::set<std::string> seen_dims;
    for (const auto& dim : dimensions) {
        if (!seen_dims.insert(dim).second) fail(ErrorKind::schema, "dimension '" + dim + "' listed twice");
        std::optional<std::size_t> col;
        for (const auto& candidate : detail::dimension_columns(dim)) {
            if ((col = find_column(candidate))) break;
        }
        if (!col) fail(ErrorKind::schema, "missing column for dimension '" + dim + "'");
        dim_cols.push_back(*col);
    }

    StratifiedDataset out;
    out.dimensions = dimensions;
    out.provenance = std::move(provenance);
    std::set<std::tuple<int, int, Stratum>> keys;

    for (std::size_t li = header_line + 1; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        if (trim(lines[li]).empty()) continue;
        const auto raw = split(lines[li], '\t');
        std::vector<std::string> fields;
        fields.reserve(raw.size());
        for (const auto& f : raw) fields.push_back(detail::unquote(f));

        if (notes_col && *notes_col < fields.size() && !fields[*notes_col].empty()) continue;

        const std::size_t needed = std::max({*month_col, *deaths_col,
                                             dim_cols.empty() ? 0 : *std::max_element(dim_cols.begin(), dim_cols.end())});
        if (fields.size() <= needed)
            fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                       " fields, got " + std::to_string(fields.size()));

        WonderRecord rec;
        const auto& code = fields[*month_col];
        if (code.size() != 7 || code[4] != '/' ||
            !detail::parse_two_ints(code, '/', rec.year, rec.month) || rec.month < 1 || rec.month > 12 ||
            rec.year < 1999)
            fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": malformed month code '" + code + "'");

        const auto& deaths = fields[*deaths_col];
        if (deaths == "Suppressed") {
            rec.deaths.reset();
        } else {
            if (deaths.empty() || deaths.find_first_not_of("0123456789") != std::string::npos)
                fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": malformed deaths value '" + deaths + "'");
            rec.deaths = std::stoll(deaths);
        }

        for (std::size_t d = 0; d < dimensions.size(); ++d) rec.stratum[dimensions[d]] = fields[dim_cols[d]];

        if (!keys.emplace(rec.year, rec.month, rec.stratum).second)
            fail(ErrorKind::duplicate, "line " + std::to_string(line_no) + ": duplicate row for " + detail::record_key(rec));
        out.records.push_back(std::move(rec));
    }
    return out;
}

inline StratifiedDataset read_wonder_export(const std::string& path, const std::vector<std::string>& dimensions) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_wonder_export(buf.str(), dimensions, "CDC WONDER export: " + path);
}

/// Writes a dataset in the export layout accepted by parse_wonder_export.
inline std::string write_wonder_export(const StratifiedDataset& dataset) {
    std::string out = "\"Notes\"";
    for (const auto& dim : dataset.dimensions) out += "\t\"" + detail::dimension_columns(dim).front() + "\"";
    out += "\t\"Month Code\"\t\"Deaths\"\n";
    char code[16];
    for (const auto& r : dataset.records) {
        out += "\"\"";
        for (const auto& dim : dataset.dimensions) out += "\t\"" + r.stratum.at(dim) + "\"";
        std::snprintf(code, sizeof code, "%04d/%02d", r.year, r.month);
        out += "\t\"";
        out += code;
        out += "\"\t";
        out += r.deaths ? std::to_string(*r.deaths) : std::string("Suppressed");
        out += "\n";
    }
    return out;
}

inline StratifiedDataset resolve_suppression(StratifiedDataset dataset, SuppressionPolicy policy) {
    std::vector<std::string> offending;
    for (auto& r : dataset.records) {
        if (!r.suppressed()) continue;
        switch (policy.mode) {
        case SuppressionMode::fail: offending.push_back(detail::record_key(r)); break;
        case SuppressionMode::zero: r.deaths = 0; break;
        case SuppressionMode::midpoint: r.deaths = SuppressionPolicy::kMidpoint; break;
        }
    }
    if (!offending.empty()) {
        std::string msg = std::to_string(offending.size()) + " suppressed cell(s):";
        for (const auto& k : offending) msg += " " + k + ";";
        fail(ErrorKind::suppression, msg);
    }
    return dataset;
}

/// Selected category per dimension; dimensions not listed are summed over.
using StratumFilter = std::map<std::string, std::string>;

inline MonthlySeries to_series(const StratifiedDataset& dataset, const StratumFilter& filter = {}) {
    for (const auto& [dim, _] : filter) {
        if (std::find(dataset.dimensions.begin(), dataset.dimensions.end(), dim) == dataset.dimensions.end())
            fail(ErrorKind::schema, "filter on unknown dimension '" + dim + "'");
    }
    std::map<int, double> totals;
    for (const auto& r : dataset.records) {
        const bool match = std::all_of(filter.begin(), filter.end(),
                                       [&](const auto& kv) { return r.stratum.at(kv.first) == kv.second; });
        if (!match) continue;
        if (r.suppressed())
            fail(ErrorKind::suppression, "unresolved suppressed cell " + detail::record_key(r));
        totals[r.when().index()] += static_cast<double>(*r.deaths);
    }
    if (totals.empty()) fail(ErrorKind::empty, "no records match the stratum selection");

    const int first = totals.begin()->first;
    const int last = totals.rbegin()->first;
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(last - first + 1));
    for (int idx = first; idx <= last; ++idx) {
        const auto it = totals.find(idx);
        if (it == totals.end()) fail(ErrorKind::gap, "missing month " + YearMonth::from_index(idx).iso());
        values.push_back(it->second);
    }
    return MonthlySeries(YearMonth::from_index(first), std::move(values));
}

/// Distinct category labels of `dimension`, sorted.
inline std::vector<std::string> categories(const StratifiedDataset& dataset, const std::string& dimension) {
    std::set<std::string> out;
    for (const auto& r : dataset.records) out.insert(r.stratum.at(dimension));
    return {out.begin(), out.end()};
}

struct SyntheticSpec {
    int n_months = 108;
    double base_level = 5000.0;
    double linear_slope = 0.0;
    std::array<double, 12> seasonal_amplitudes{};
    double noise_sd = 0.0;
    YearMonth start{2015, 1};
};

/// values[i] = max(0, base + slope*i + amplitude[i mod 12] + N(0, noise_sd)); one normal draw per month.
inline MonthlySeries generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.n_months < 24) fail(ErrorKind::too_short, "synthetic series needs at least 24 months");
    if (!(spec.noise_sd >= 0.0)) fail(ErrorKind::domain, "noise_sd must be >= 0");
    Rng rng(seed);
    std::vector<double> values(static_cast<std::size_t>(spec.n_months));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double eps = rng.normal(0.0, 1.0) * spec.noise_sd;
        const double v = spec.base_level + spec.linear_slope * static_cast<double>(i) + spec.seasonal_amplitudes[i % 12] + eps;
        values[i] = std::max(0.0, v);
    }
    return MonthlySeries(spec.start, std::move(values));
}

/// Adds `amount` to every month from `from` onward (regime-change fixtures).
inline MonthlySeries apply_level_shift(const MonthlySeries& series, YearMonth from, double amount) {
    auto values = series.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (series.month_at(i) >= from) values[i] = std::max(0.0, values[i] + amount);
    }
    return MonthlySeries(series.start(), std::move(values));
}

inline std::string write_series_csv(const MonthlySeries& series) {
    std::string out = "year,month,deaths\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto m = series.month_at(i);
        out += std::to_string(m.year) + "," + std::to_string(m.month) + "," + format_exact(series[i]) + "\n";
    }
    return out;
}

inline MonthlySeries parse_series_csv(std::string_view text) {
    const auto lines = lines_of(text);
    if (lines.empty() || trim(lines[0]) != "year,month,deaths")
        fail(ErrorKind::schema, "series CSV must start with 'year,month,deaths'");
    std::optional<YearMonth> start;
    std::vector<double> values;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = split(lines[i], ',');
        if (f.size() != 3) fail(ErrorKind::parse, "line " + std::to_string(i + 1) + ": expected 3 fields");
        YearMonth m;
        double v = 0.0;
        try {
            m = {std::stoi(f[0]), std::stoi(f[1])};
            v = std::stod(f[2]);
        } catch (const std::exception&) {
            fail(ErrorKind::parse, "line " + std::to_string(i + 1) + ": malformed number");
        }
        if (m.month < 1 || m.month > 12) fail(ErrorKind::parse, "line " + std::to_string(i + 1) + ": bad month");
        if (!start) start = m;
        if (m != start->plus(static_cast<int>(values.size())))
            fail(ErrorKind::gap, "line " + std::to_string(i + 1) + ": expected " +
                                     start->plus(static_cast<int>(values.size())).iso());
        values.push_back(v);
    }
    if (!start) fail(ErrorKind::empty, "series CSV has no rows");
    return MonthlySeries(*start, std::move(values));
}

inline MonthlySeries read_series_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_series_csv(buf.str());
}

}  // namespace cfmort
