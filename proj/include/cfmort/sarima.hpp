#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cfmort/calendar.hpp"
#include "cfmort/error.hpp"
#include "cfmort/metrics.hpp"
#include "cfmort/optim.hpp"
#include "cfmort/parallel.hpp"
#include "cfmort/projection.hpp"
#include "cfmort/rng.hpp"
#include "cfmort/series.hpp"

namespace cfmort {

/// Two-sided 95% normal quantile, 1.96 as used throughout the reports.
inline constexpr double kZ975 = 1.96;

struct SarimaOrder {
    int p = 0, d = 0, q = 0;
    int P = 0, D = 0, Q = 0;
    static constexpr int s = 12;

    void validate() const {
        for (int v : {p, d, q, P, D, Q}) {
            if (v < 0 || v > 2) fail(ErrorKind::config, "SARIMA orders must lie in {0,1,2}: " + to_string());
        }
    }

    int total() const { return p + d + q + P + D + Q; }

    std::string to_string() const {
        return "(" + std::to_string(p) + "," + std::to_string(d) + "," + std::to_string(q) + ")(" + std::to_string(P) +
               "," + std::to_string(D) + "," + std::to_string(Q) + ",12)";
    }

    friend bool operator==(const SarimaOrder&, const SarimaOrder&) = default;
    friend auto operator<=>(const SarimaOrder&, const SarimaOrder&) = default;
};

/// All 3^6 = 729 orders in lexicographic (p,d,q,P,D,Q) order.
inline std::vector<SarimaOrder> full_sarima_grid() {
    std::vector<SarimaOrder> grid;
    grid.reserve(729);
    for (int p = 0; p < 3; ++p)
        for (int d = 0; d < 3; ++d)
            for (int q = 0; q < 3; ++q)
                for (int P = 0; P < 3; ++P)
                    for (int D = 0; D < 3; ++D)
                        for (int Q = 0; Q < 3; ++Q) grid.push_back({p, d, q, P, D, Q});
    return grid;
}

/**
 * Fitted multiplicative seasonal ARIMA model.
 *
 * Defining operators, with x_t = y_t - mean:
 *   (1 - sum phi_i B^i)(1 - sum Phi_j B^{12j}) (1-B)^d (1-B^12)^D x_t
 *       = (1 + sum theta_i B^i)(1 + sum Theta_j B^{12j}) e_t
 * `history` holds the observations the model was conditioned on and
 * `residuals` the matching one-step innovations (0 where unconditioned).
 */
struct SarimaModel {
    SarimaOrder order;
    std::vector<double> phi;
    std::vector<double> theta;
    std::vector<double> seasonal_phi;
    std::vector<double> seasonal_theta;
    double mean = 0.0;  ///< only nonzero when d = D = 0
    double sigma2 = 0.0;
    double css = 0.0;
    std::size_t n_effective = 0;
    std::vector<double> history;
    std::vector<double> residuals;
    YearMonth anchor{};  ///< calendar month of history[0]
};

namespace sarima_detail {

using Poly = std::vector<double>;  // p[0] + p[1] B + p[2] B^2 ...

inline Poly multiply(const Poly& a, const Poly& b) {
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

/// 1 - sum c_i B^{lag*i}
inline Poly ar_poly(const std::vector<double>& c, std::size_t lag) {
    Poly p(c.size() * lag + 1, 0.0);
    p[0] = 1.0;
    for (std::size_t i = 0; i < c.size(); ++i) p[(i + 1) * lag] = -c[i];
    return p;
}

/// 1 + sum c_i B^{lag*i}
inline Poly ma_poly(const std::vector<double>& c, std::size_t lag) {
    Poly p(c.size() * lag + 1, 0.0);
    p[0] = 1.0;
    for (std::size_t i = 0; i < c.size(); ++i) p[(i + 1) * lag] = c[i];
    return p;
}

/// Converts 1 - sum a_i B^i into the recursion coefficients a_1..a_n.
inline std::vector<double> recursion_coeffs(const Poly& p) {
    std::vector<double> a(p.size() - 1);
    for (std::size_t i = 1; i < p.size(); ++i) a[i - 1] = -p[i];
    return a;
}

/// Whether all roots of 1 - sum a_i z^i lie strictly outside the unit circle
/// (step-down recursion; |reflection coefficient| >= 1 rejects).
inline bool stationary(std::vector<double> a) {
    while (!a.empty() && a.back() == 0.0) a.pop_back();
    for (std::size_t k = a.size(); k >= 1; --k) {
        const double r = a[k - 1];
        if (!(std::abs(r) < 1.0)) return false;
        const double denom = 1.0 - r * r;
        std::vector<double> next(k - 1);
        for (std::size_t i = 0; i + 1 < k; ++i) next[i] = (a[i] + r * a[k - 2 - i]) / denom;
        a = std::move(next);
    }
    return true;
}

inline bool invertible(const std::vector<double>& ma) {
    std::vector<double> a(ma.size());
    for (std::size_t i = 0; i < ma.size(); ++i) a[i] = -ma[i];
    return stationary(std::move(a));
}

struct Expanded {
    std::vector<double> ar;  // x_t = sum ar_i x_{t-i} + ...
    std::vector<double> ma;  // ... + e_t + sum ma_j e_{t-j}
};

inline Expanded expand(const SarimaModel& m) {
    const auto ar = multiply(ar_poly(m.phi, 1), ar_poly(m.seasonal_phi, SarimaOrder::s));
    const auto ma = multiply(ma_poly(m.theta, 1), ma_poly(m.seasonal_theta, SarimaOrder::s));
    return {recursion_coeffs(ar), std::vector<double>(ma.begin() + 1, ma.end())};
}

/// Conditional residuals of the ARMA recursion on (already differenced, demeaned) w.
/// Residuals before index ar.size() are fixed at 0 and excluded from the sum of squares.
inline double css_residuals(std::span<const double> w, const std::vector<double>& ar, const std::vector<double>& ma,
                            std::vector<double>& e) {
    const std::size_t n = w.size();
    const std::size_t start = ar.size();
    e.assign(n, 0.0);
    double css = 0.0;
    for (std::size_t t = start; t < n; ++t) {
        double v = w[t];
        for (std::size_t i = 0; i < ar.size(); ++i) v -= ar[i] * w[t - 1 - i];
        for (std::size_t j = 0; j < ma.size() && j < t; ++j) v -= ma[j] * e[t - 1 - j];
        e[t] = v;
        css += v * v;
    }
    return css;
}

inline std::size_t min_length(const SarimaOrder& o) {
    return static_cast<std::size_t>(o.d + 12 * o.D + std::max(o.p + 12 * o.P, o.q + 12 * o.Q) + 10);
}

/// Parameter vector layout: phi, theta, Phi, Theta, then the standardized mean when d = D = 0.
inline void unpack(const SarimaOrder& o, std::span<const double> x, SarimaModel& m) {
    std::size_t k = 0;
    auto take = [&](int count, std::vector<double>& out) {
        out.assign(x.begin() + static_cast<std::ptrdiff_t>(k), x.begin() + static_cast<std::ptrdiff_t>(k + count));
        k += static_cast<std::size_t>(count);
    };
    take(o.p, m.phi);
    take(o.q, m.theta);
    take(o.P, m.seasonal_phi);
    take(o.Q, m.seasonal_theta);
}

}  // namespace sarima_detail

/// Thrown when no optimizer start converged; carries the best point seen.
class SarimaConvergenceError : public Error {
public:
    SarimaConvergenceError(const std::string& msg, SarimaModel best)
        : Error(ErrorKind::convergence, msg), best_(std::move(best)) {}
    const SarimaModel& best_so_far() const { return best_; }

private:
    SarimaModel best_;
};

/**
 * Conditions a model with fixed coefficients on `y`: differences, computes
 * conditional residuals and sigma2 = CSS / effective sample size.
 */
inline SarimaModel condition_sarima(std::span<const double> y, const SarimaOrder& order, std::vector<double> phi,
                                    std::vector<double> theta, std::vector<double> seasonal_phi,
                                    std::vector<double> seasonal_theta, double mean = 0.0, YearMonth anchor = {}) {
    order.validate();
    SarimaModel m;
    m.order = order;
    m.phi = std::move(phi);
    m.theta = std::move(theta);
    m.seasonal_phi = std::move(seasonal_phi);
    m.seasonal_theta = std::move(seasonal_theta);
    if (m.phi.size() != static_cast<std::size_t>(order.p) || m.theta.size() != static_cast<std::size_t>(order.q) ||
        m.seasonal_phi.size() != static_cast<std::size_t>(order.P) ||
        m.seasonal_theta.size() != static_cast<std::size_t>(order.Q))
        fail(ErrorKind::shape, "coefficient counts do not match order " + order.to_string());
    m.mean = (order.d == 0 && order.D == 0) ? mean : 0.0;
    m.anchor = anchor;
    m.history.assign(y.begin(), y.end());

    auto [w, state] = difference(y, order.d, order.D, SarimaOrder::s);
    for (auto& v : w) v -= m.mean;
    const auto ex = sarima_detail::expand(m);
    if (w.size() <= ex.ar.size()) fail(ErrorKind::insufficient_data, "series too short for order " + order.to_string());
    std::vector<double> e;
    m.css = sarima_detail::css_residuals(w, ex.ar, ex.ma, e);
    m.n_effective = w.size() - ex.ar.size();
    m.sigma2 = m.css / static_cast<double>(m.n_effective);
    const std::size_t offset = y.size() - w.size();
    m.residuals.assign(y.size(), 0.0);
    std::copy(e.begin(), e.end(), m.residuals.begin() + static_cast<std::ptrdiff_t>(offset));
    return m;
}

struct SarimaFitOptions {
    int n_starts = 3;               ///< start 0 is all zeros; the rest are seeded jitters of it
    double jitter = 0.1;
    std::uint64_t seed = 20150101;  ///< fixed, so fits do not depend on any trial seed
    NelderMeadOptions optimizer{};
};

/**
 * Fits by minimizing the conditional sum of squares with Nelder-Mead.
 * Candidates with AR or MA roots on or inside the unit circle are penalized.
 * Multi-start; the lowest CSS among converged starts wins.
 */
inline SarimaModel fit_sarima(std::span<const double> y, const SarimaOrder& order, const SarimaFitOptions& opts = {},
                              YearMonth anchor = {}) {
    order.validate();
    if (y.size() <= sarima_detail::min_length(order))
        fail(ErrorKind::insufficient_data, "order " + order.to_string() + " needs more than " +
                                               std::to_string(sarima_detail::min_length(order)) + " observations, got " +
                                               std::to_string(y.size()));
    const bool with_mean = order.d == 0 && order.D == 0;
    const auto diffed = difference(y, order.d, order.D, SarimaOrder::s).first;
    double w_mean = 0.0, w_sd = 1.0;
    if (with_mean) {
        w_mean = std::accumulate(diffed.begin(), diffed.end(), 0.0) / static_cast<double>(diffed.size());
        double ss = 0.0;
        for (double v : diffed) ss += (v - w_mean) * (v - w_mean);
        w_sd = std::sqrt(ss / static_cast<double>(diffed.size()));
        if (!(w_sd > 0.0)) w_sd = 1.0;
    }

    const std::size_t n_coef = static_cast<std::size_t>(order.p + order.q + order.P + order.Q);
    const std::size_t n_par = n_coef + (with_mean ? 1 : 0);
    constexpr double kPenalty = 1e100;

    SarimaModel scratch;
    scratch.order = order;
    std::vector<double> w(diffed.size()), e;
    auto objective = [&](std::span<const double> x) -> double {
        sarima_detail::unpack(order, x, scratch);
        if (!sarima_detail::stationary(scratch.phi) || !sarima_detail::stationary(scratch.seasonal_phi) ||
            !sarima_detail::invertible(scratch.theta) || !sarima_detail::invertible(scratch.seasonal_theta))
            return kPenalty;
        const double mu = with_mean ? w_mean + w_sd * x[n_coef] : 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = diffed[i] - mu;
        const auto ex = sarima_detail::expand(scratch);
        return sarima_detail::css_residuals(w, ex.ar, ex.ma, e);
    };

    // Residual sums of squares below this are numerically zero for this series.
    NelderMeadOptions nm = opts.optimizer;
    if (nm.fatol == 0.0) {
        double ss = 0.0;
        for (double v : diffed) ss += (v - w_mean) * (v - w_mean);
        nm.fatol = 1e-20 * std::max(ss, std::numeric_limits<double>::min());
    }

    Rng rng(opts.seed);
    NelderMeadResult best;
    best.value = std::numeric_limits<double>::infinity();
    bool any_converged = false;
    const int starts = std::max(1, opts.n_starts);
    for (int s = 0; s < starts; ++s) {
        std::vector<double> x0(n_par, 0.0);
        if (s > 0) {
            for (int attempt = 0; attempt < 20; ++attempt) {
                for (std::size_t i = 0; i < n_par; ++i) x0[i] = rng.uniform(-opts.jitter, opts.jitter);
                if (objective(x0) < kPenalty) break;
                std::fill(x0.begin(), x0.end(), 0.0);
            }
        }
        auto r = nelder_mead(objective, x0, nm);
        // One restart from the best vertex guards against premature simplex collapse.
        const auto r2 = nelder_mead(objective, r.x, nm);
        r.converged = r.converged || r2.converged;
        if (r2.value <= r.value) {
            r.x = r2.x;
            r.value = r2.value;
        }
        if (r.converged && (!any_converged || r.value < best.value)) {
            best = std::move(r);
            any_converged = true;
        } else if (!any_converged && r.value < best.value) {
            best = std::move(r);
        }
    }

    SarimaModel out;
    sarima_detail::unpack(order, best.x, out);
    const double mu = with_mean ? w_mean + w_sd * best.x[n_coef] : 0.0;
    out = condition_sarima(y, order, out.phi, out.theta, out.seasonal_phi, out.seasonal_theta, mu, anchor);
    if (!any_converged)
        throw SarimaConvergenceError("optimizer did not converge for order " + order.to_string(), std::move(out));
    return out;
}

inline SarimaModel fit_sarima(const MonthlySeries& series, const SarimaOrder& order, const SarimaFitOptions& opts = {}) {
    return fit_sarima(std::span<const double>(series.values()), order, opts, series.start());
}

/// MA(infinity) weights psi_0..psi_{n-1} of the integrated model.
inline std::vector<double> psi_weights(const SarimaModel& model, std::size_t n) {
    using namespace sarima_detail;
    auto ex = expand(model);
    Poly full = ar_poly(ex.ar, 1);
    for (int k = 0; k < model.order.d; ++k) full = multiply(full, Poly{1.0, -1.0});
    for (int k = 0; k < model.order.D; ++k) {
        Poly seasonal(SarimaOrder::s + 1, 0.0);
        seasonal[0] = 1.0;
        seasonal[SarimaOrder::s] = -1.0;
        full = multiply(full, seasonal);
    }
    const auto c = recursion_coeffs(full);
    std::vector<double> psi(n, 0.0);
    if (n == 0) return psi;
    psi[0] = 1.0;
    for (std::size_t j = 1; j < n; ++j) {
        double v = j <= ex.ma.size() ? ex.ma[j - 1] : 0.0;
        for (std::size_t i = 1; i <= std::min(j, c.size()); ++i) v += c[i - 1] * psi[j - i];
        psi[j] = v;
    }
    return psi;
}

/**
 * Point forecasts by running the integrated difference equation forward with
 * future innovations at zero. Half-width at step k is
 * z * sqrt(sigma2 * sum_{j<k} psi_j^2).
 */
inline ProjectionResult forecast_sarima(const SarimaModel& model, int horizon, double level = 0.95) {
    if (horizon <= 0) fail(ErrorKind::domain, "forecast horizon must be >= 1");
    if (std::abs(level - 0.95) > 1e-12) fail(ErrorKind::domain, "only 95% analytic intervals are supported");
    using namespace sarima_detail;
    const auto ex = expand(model);
    Poly full = ar_poly(ex.ar, 1);
    for (int k = 0; k < model.order.d; ++k) full = multiply(full, Poly{1.0, -1.0});
    for (int k = 0; k < model.order.D; ++k) {
        Poly seasonal(SarimaOrder::s + 1, 0.0);
        seasonal[0] = 1.0;
        seasonal[SarimaOrder::s] = -1.0;
        full = multiply(full, seasonal);
    }
    const auto c = recursion_coeffs(full);

    std::vector<double> x(model.history.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = model.history[i] - model.mean;
    std::vector<double> e = model.residuals;
    e.resize(x.size(), 0.0);

    const std::size_t n = x.size();
    const auto h = static_cast<std::size_t>(horizon);
    ProjectionResult out;
    out.start = model.anchor.plus(static_cast<int>(n));
    out.level = level;
    for (std::size_t k = 0; k < h; ++k) {
        const std::size_t t = n + k;
        double v = 0.0;
        for (std::size_t i = 1; i <= c.size() && i <= t; ++i) v += c[i - 1] * x[t - i];
        for (std::size_t j = 1; j <= ex.ma.size() && j <= t; ++j) v += ex.ma[j - 1] * e[t - j];
        x.push_back(v);
        e.push_back(0.0);
        out.points.push_back(v + model.mean);
    }

    const auto psi = psi_weights(model, h);
    double cum = 0.0;
    for (std::size_t k = 0; k < h; ++k) {
        cum += psi[k] * psi[k];
        const double half = kZ975 * std::sqrt(model.sigma2 * cum);
        out.lower.push_back(out.points[k] - half);
        out.upper.push_back(out.points[k] + half);
    }
    return out;
}

/// One-step in-sample fits y_t - e_t over the conditioned range.
struct InSampleFit {
    std::size_t first = 0;  ///< index into history of fitted[0]
    std::vector<double> fitted;
};

inline InSampleFit sarima_in_sample(const SarimaModel& model) {
    const auto ex = sarima_detail::expand(model);
    InSampleFit out;
    out.first = static_cast<std::size_t>(model.order.d + 12 * model.order.D) + ex.ar.size();
    for (std::size_t t = out.first; t < model.history.size(); ++t) out.fitted.push_back(model.history[t] - model.residuals[t]);
    return out;
}

struct SarimaLeaderboardEntry {
    SarimaOrder order;
    double val_rmse = std::numeric_limits<double>::quiet_NaN();
    std::string status = "ok";  ///< "ok" or the failure kind

    bool ok() const { return status == "ok"; }
};

struct SarimaGridResult {
    SarimaOrder best_order;
    SarimaModel model;
    std::vector<SarimaLeaderboardEntry> leaderboard;  ///< in grid order
};

struct SarimaGridOptions {
    std::vector<SarimaOrder> orders = full_sarima_grid();
    SarimaFitOptions fit{};
    std::size_t workers = 1;
};

/// Ranking: validation RMSE, then total order, then lexicographic order.
inline bool sarima_rank_less(const SarimaLeaderboardEntry& a, const SarimaLeaderboardEntry& b) {
    if (a.val_rmse != b.val_rmse) return a.val_rmse < b.val_rmse;
    if (a.order.total() != b.order.total()) return a.order.total() < b.order.total();
    return a.order < b.order;
}

/// Fits every order on the training segment and scores the validation segment.
inline SarimaGridResult grid_search_sarima(const TuningSplit& split, const SarimaGridOptions& opts = {}) {
    if (split.train.empty() || split.validation.empty())
        fail(ErrorKind::insufficient_data, "grid search needs nonempty train and validation segments");
    auto orders = opts.orders;
    std::sort(orders.begin(), orders.end());
    orders.erase(std::unique(orders.begin(), orders.end()), orders.end());

    std::vector<SarimaLeaderboardEntry> board(orders.size());
    parallel_for(orders.size(), opts.workers, [&](std::size_t i) {
        board[i].order = orders[i];
        try {
            const auto model = fit_sarima(split.train, orders[i], opts.fit);
            const auto fc = forecast_sarima(model, static_cast<int>(split.validation.size()));
            const double r = rmse(split.validation.values(), fc.points);
            if (!std::isfinite(r)) fail(ErrorKind::numeric, "non-finite validation RMSE");
            board[i].val_rmse = r;
        } catch (const Error& err) {
            board[i].status = std::string(to_string(err.kind()));
        }
    });

    const SarimaLeaderboardEntry* best = nullptr;
    std::size_t failures = 0;
    for (const auto& entry : board) {
        if (!entry.ok()) {
            ++failures;
            continue;
        }
        if (!best || sarima_rank_less(entry, *best)) best = &entry;
    }
    if (!best) {
        std::map<std::string, int> census;
        for (const auto& entry : board) ++census[entry.status];
        std::string msg = "all " + std::to_string(board.size()) + " SARIMA orders failed:";
        for (const auto& [k, v] : census) msg += " " + k + "=" + std::to_string(v);
        fail(ErrorKind::exhaustion, msg);
    }
    SarimaGridResult out;
    out.best_order = best->order;
    out.model = fit_sarima(split.train, best->order, opts.fit);
    out.leaderboard = std::move(board);
    return out;
}

inline std::string sarima_leaderboard_csv(const std::vector<SarimaLeaderboardEntry>& board) {
    std::string out = "p,d,q,P,D,Q,val_rmse,status\n";
    char buf[64];
    for (const auto& e : board) {
        const auto& o = e.order;
        out += std::to_string(o.p) + "," + std::to_string(o.d) + "," + std::to_string(o.q) + "," + std::to_string(o.P) +
               "," + std::to_string(o.D) + "," + std::to_string(o.Q) + ",";
        if (e.ok()) {
            std::snprintf(buf, sizeof buf, "%.6f", e.val_rmse);
            out += buf;
        }
        out += "," + e.status + "\n";
    }
    return out;
}

}  // namespace cfmort
