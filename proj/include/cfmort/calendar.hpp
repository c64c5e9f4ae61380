#pragma once

#include <cstdio>
#include <compare>
#include <string>
#include <string_view>
#include <vector>

#include "cfmort/error.hpp"

namespace cfmort {

/// Calendar month. Ordering and arithmetic are by absolute month index.
struct YearMonth {
    int year = 1970;
    int month = 1;

    constexpr int index() const { return year * 12 + (month - 1); }

    static constexpr YearMonth from_index(int idx) {
        const int y = idx >= 0 ? idx / 12 : (idx - 11) / 12;
        return YearMonth{y, idx - y * 12 + 1};
    }

    constexpr YearMonth plus(int months) const { return from_index(index() + months); }

    friend constexpr bool operator==(const YearMonth&, const YearMonth&) = default;
    friend constexpr auto operator<=>(const YearMonth& a, const YearMonth& b) {
        return a.index() <=> b.index();
    }

    /// "YYYY-MM"
    std::string iso() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
        return buf;
    }
};

/// Number of months from `a` to `b` (b - a).
constexpr int months_between(YearMonth a, YearMonth b) { return b.index() - a.index(); }

namespace detail {

inline bool parse_two_ints(std::string_view text, char sep, int& a, int& b) {
    const auto pos = text.find(sep);
    if (pos != 4 || text.size() != 7) return false;
    auto digits = [](std::string_view s, int& out) {
        if (s.empty()) return false;
        int v = 0;
        for (char ch : s) {
            if (ch < '0' || ch > '9') return false;
            v = v * 10 + (ch - '0');
        }
        out = v;
        return true;
    };
    return digits(text.substr(0, 4), a) && digits(text.substr(5), b);
}

}  // namespace detail

/// Parses ISO "YYYY-MM".
inline YearMonth parse_iso_month(std::string_view text) {
    int y = 0, m = 0;
    if (!detail::parse_two_ints(text, '-', y, m) || m < 1 || m > 12)
        fail(ErrorKind::parse, "expected YYYY-MM, got '" + std::string(text) + "'");
    return {y, m};
}

/// Ordered monthly counts anchored at a calendar month.
class MonthlySeries {
public:
    MonthlySeries() = default;

    MonthlySeries(YearMonth start, std::vector<double> values)
        : start_(start), values_(std::move(values)) {
        if (values_.empty()) fail(ErrorKind::empty, "monthly series has no values");
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!(values_[i] >= 0.0))
                fail(ErrorKind::domain, "negative or non-finite count at " + start_.plus(static_cast<int>(i)).iso());
        }
    }

    YearMonth start() const { return start_; }
    YearMonth end() const { return start_.plus(static_cast<int>(values_.size()) - 1); }
    YearMonth month_at(std::size_t i) const { return start_.plus(static_cast<int>(i)); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    const std::vector<double>& values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool covers(YearMonth m) const { return !empty() && m >= start_ && m <= end(); }

    /// Inclusive calendar slice [from, to]; an inverted range yields an empty series.
    MonthlySeries slice(YearMonth from, YearMonth to) const {
        if (to < from) return MonthlySeries{};
        if (!covers(from) || !covers(to))
            fail(ErrorKind::range, "slice " + from.iso() + ".." + to.iso() + " outside coverage " +
                                       start_.iso() + ".." + end().iso());
        const auto a = static_cast<std::size_t>(months_between(start_, from));
        const auto b = static_cast<std::size_t>(months_between(start_, to)) + 1;
        return MonthlySeries(from, std::vector<double>(values_.begin() + a, values_.begin() + b));
    }

    /// Last `n` values.
    std::vector<double> tail(std::size_t n) const {
        if (n > values_.size()) fail(ErrorKind::insufficient_data, "tail longer than series");
        return {values_.end() - static_cast<std::ptrdiff_t>(n), values_.end()};
    }

    friend bool operator==(const MonthlySeries&, const MonthlySeries&) = default;

private:
    YearMonth start_{};
    std::vector<double> values_;
};

/// Concatenates calendar-contiguous series; empty pieces are skipped.
inline MonthlySeries concat(const MonthlySeries& a, const MonthlySeries& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (b.start() != a.end().plus(1))
        fail(ErrorKind::alignment, "series not contiguous: " + a.end().iso() + " then " + b.start().iso());
    auto v = a.values();
    v.insert(v.end(), b.values().begin(), b.values().end());
    return MonthlySeries(a.start(), std::move(v));
}

}  // namespace cfmort
