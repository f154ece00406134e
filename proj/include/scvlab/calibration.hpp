// scvlab/calibration.hpp
#pragma once

#include "scvlab/churn.hpp"
#include "scvlab/errors.hpp"
#include "scvlab/params.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace scvlab {

struct CohortRow
{
    std::string cohort_id;
    int period = 0;
    double active_fraction = 0.0;
    std::optional<double> cohort_size;
};

/**
 * Per-cohort active fractions by period since acquisition. A cohort must start
 * at period 0 with fraction 1, list consecutive periods, and never increase.
 */
class CohortTable
{
public:
    struct Cohort
    {
        std::string id;
        std::vector<double> active; ///< active[t] = fraction still active at period t
        double size = 1.0;
    };

    CohortTable() = default;

    explicit CohortTable(const std::vector<CohortRow>& rows)
    {
        if (rows.empty()) {
            throw ValidationError("cohorts", "no rows");
        }
        const bool sized = rows.front().cohort_size.has_value();
        std::map<std::string, std::map<int, double>> by_id;
        std::map<std::string, double> sizes;
        std::vector<std::string> order;
        for (const auto& row : rows) {
            const std::string at = "cohorts[" + row.cohort_id + "]";
            if (row.cohort_size.has_value() != sized) {
                throw ValidationError(at + ".cohort_size", "either every row or no row carries cohort_size");
            }
            if (row.period < 0) {
                throw ValidationError(at + ".period", "must be >= 0");
            }
            if (!std::isfinite(row.active_fraction) || row.active_fraction < 0.0 || row.active_fraction > 1.0) {
                throw ValidationError(at + ".active_fraction", "must lie in [0, 1]");
            }
            if (!by_id.contains(row.cohort_id)) {
                order.push_back(row.cohort_id);
            }
            auto& periods = by_id[row.cohort_id];
            if (!periods.emplace(row.period, row.active_fraction).second) {
                throw ValidationError(at + ".period", "duplicate period " + std::to_string(row.period));
            }
            if (sized) {
                if (!(*row.cohort_size > 0.0) || !std::isfinite(*row.cohort_size)) {
                    throw ValidationError(at + ".cohort_size", "must be > 0");
                }
                auto [it, fresh] = sizes.emplace(row.cohort_id, *row.cohort_size);
                if (!fresh && it->second != *row.cohort_size) {
                    throw ValidationError(at + ".cohort_size", "differs between rows of the same cohort");
                }
            }
        }

        for (const auto& id : order) {
            const auto& periods = by_id[id];
            const std::string at = "cohorts[" + id + "]";
            Cohort c;
            c.id = id;
            c.size = sized ? sizes[id] : 1.0;
            int expect = 0;
            for (const auto& [t, a] : periods) {
                if (t != expect) {
                    throw ValidationError(at + ".period", "periods must be consecutive from 0 (missing " +
                                                              std::to_string(expect) + ")");
                }
                if (t == 0 && a != 1.0) {
                    throw ValidationError(at + ".active_fraction", "period 0 must have active_fraction = 1");
                }
                if (!c.active.empty() && a > c.active.back()) {
                    throw ValidationError(at + ".active_fraction",
                                          "increases at period " + std::to_string(t) + "; must be non-increasing");
                }
                c.active.push_back(a);
                ++expect;
            }
            m_cohorts.push_back(std::move(c));
        }
    }

    [[nodiscard]] const std::vector<Cohort>& cohorts() const noexcept { return m_cohorts; }

private:
    std::vector<Cohort> m_cohorts;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) {
            field.remove_prefix(1);
        }
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
            field.remove_suffix(1);
        }
        out.push_back(field);
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view text, const std::string& where)
{
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && text.front() == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || text.empty()) {
        throw ValidationError(where, "not a number: '" + std::string(text) + "'");
    }
    return value;
}

} // namespace detail

/// Reads `cohort_id,period,active_fraction[,cohort_size]` CSV.
[[nodiscard]] inline CohortTable parse_cohort_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) {
        throw ValidationError("csv", "empty input");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
        line.erase(0, 3); // UTF-8 BOM
    }
    const auto header = detail::split_csv_line(line);
    const bool sized = header.size() == 4;
    if (!(header.size() == 3 || sized) || header[0] != "cohort_id" || header[1] != "period" ||
        header[2] != "active_fraction" || (sized && header[3] != "cohort_size")) {
        throw ValidationError("csv.header", "expected 'cohort_id,period,active_fraction[,cohort_size]'");
    }

    std::vector<CohortRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto fields = detail::split_csv_line(line);
        const std::string where = "csv.line[" + std::to_string(lineno) + "]";
        if (fields.size() != header.size()) {
            throw ValidationError(where, "expected " + std::to_string(header.size()) + " fields, got " +
                                             std::to_string(fields.size()));
        }
        if (fields[0].empty()) {
            throw ValidationError(where + ".cohort_id", "empty");
        }
        CohortRow row;
        row.cohort_id = std::string(fields[0]);
        row.period = detail::parse_number<int>(fields[1], where + ".period");
        row.active_fraction = detail::parse_number<double>(fields[2], where + ".active_fraction");
        if (sized) {
            row.cohort_size = detail::parse_number<double>(fields[3], where + ".cohort_size");
        }
        rows.push_back(std::move(row));
    }
    return CohortTable(rows);
}

struct HazardPoint
{
    int t = 0;
    double hazard = 0.0;
    double weight = 0.0; ///< pooled surviving mass at the start of period t
};

struct HazardSeries
{
    std::optional<double> trial_churn; ///< pooled period 0 -> 1 drop
    std::vector<HazardPoint> points;
    std::vector<std::string> diagnostics;
};

/// Pooled trial churn 1 - A_1, weighted by cohort size.
[[nodiscard]] inline double estimate_trial_churn(const CohortTable& table)
{
    double num = 0.0;
    double den = 0.0;
    for (const auto& c : table.cohorts()) {
        if (c.active.size() < 2) {
            throw ValidationError("cohorts[" + c.id + "].period", "period 1 missing");
        }
        num += c.size * (1.0 - c.active[1]);
        den += c.size;
    }
    if (!(den > 0.0)) {
        throw ValidationError("cohorts", "no cohorts");
    }
    return num / den;
}

/**
 * Empirical hazards: hazard(t) = (A_t - A_{t+1}) / A_t for t >= 1, pooled across
 * cohorts by weighting each cohort's hazard with its surviving mass size * A_t.
 * The 0 -> 1 drop is the trial churn and is reported separately.
 */
[[nodiscard]] inline HazardSeries hazard_rates(const CohortTable& table)
{
    HazardSeries out;
    bool any_period_one = false;
    std::size_t longest = 0;
    for (const auto& c : table.cohorts()) {
        longest = std::max(longest, c.active.size());
        any_period_one = any_period_one || c.active.size() >= 2;
    }
    if (any_period_one) {
        double num = 0.0;
        double den = 0.0;
        for (const auto& c : table.cohorts()) {
            if (c.active.size() >= 2) {
                num += c.size * (1.0 - c.active[1]);
                den += c.size;
            }
        }
        out.trial_churn = num / den;
    }

    std::vector<bool> dropped(table.cohorts().size(), false);
    for (std::size_t t = 1; t + 1 < longest; ++t) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t ci = 0; ci < table.cohorts().size(); ++ci) {
            const auto& c = table.cohorts()[ci];
            if (dropped[ci] || t + 1 >= c.active.size()) {
                continue;
            }
            const double start = c.active[t];
            if (start == 0.0) {
                dropped[ci] = true;
                out.diagnostics.push_back("cohort " + c.id + " has no active customers at period " +
                                          std::to_string(t) + "; truncated");
                continue;
            }
            num += c.size * (start - c.active[t + 1]);
            den += c.size * start;
        }
        if (den == 0.0) {
            out.diagnostics.push_back("no surviving mass at period " + std::to_string(t) + "; series truncated");
            break;
        }
        out.points.push_back(HazardPoint{static_cast<int>(t), num / den, den});
    }
    return out;
}

struct FitResult
{
    ChurnParams churn;
    double rss = 0.0; ///< weighted residual sum of squares on hazards
    std::vector<double> observed;
    std::vector<double> fitted;
    std::size_t iterations = 0; ///< golden-section iterations
    std::vector<double> residual_history; ///< best residual after each golden-section iteration
    bool converged = false;
    bool constant_model = false; ///< hazards flat: beta = 0, k not identifiable
    bool clamped = false;        ///< linear solution hit a parameter bound at the optimum
    bool recommended_region = false;
    std::vector<std::string> diagnostics;
};

namespace detail {

struct LinearFit
{
    double alpha = 0.0;
    double beta = 0.0;
    double rss = 0.0;
    bool clamped = false;
};

inline constexpr double kMinChurn = 1e-12;

inline double weighted_rss(const HazardSeries& h, double k, double alpha, double beta)
{
    double rss = 0.0;
    for (const auto& p : h.points) {
        const double r = p.hazard - (alpha + beta * std::exp(-k * p.t));
        rss += p.weight * r * r;
    }
    return rss;
}

/// Best (alpha, beta) for fixed k subject to alpha > 0, beta >= 0, alpha + beta <= 1.
inline LinearFit fit_linear(const HazardSeries& h, double k)
{
    double w = 0.0;
    double mx = 0.0;
    double my = 0.0;
    for (const auto& p : h.points) {
        w += p.weight;
        mx += p.weight * std::exp(-k * p.t);
        my += p.weight * p.hazard;
    }
    mx /= w;
    my /= w;
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& p : h.points) {
        const double dx = std::exp(-k * p.t) - mx;
        sxx += p.weight * dx * dx;
        sxy += p.weight * dx * (p.hazard - my);
    }

    LinearFit fit;
    fit.beta = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.alpha = my - fit.beta * mx;

    if (fit.beta < 0.0) {
        fit.beta = 0.0;
        fit.alpha = my;
        fit.clamped = true;
    }
    if (fit.alpha < kMinChurn) {
        // alpha pinned at its floor; refit beta alone through the origin-shifted data.
        fit.alpha = kMinChurn;
        double num = 0.0;
        double den = 0.0;
        for (const auto& p : h.points) {
            const double x = std::exp(-k * p.t);
            num += p.weight * x * (p.hazard - fit.alpha);
            den += p.weight * x * x;
        }
        fit.beta = den > 0.0 ? std::max(0.0, num / den) : 0.0;
        fit.clamped = true;
    }
    if (fit.alpha + fit.beta > 1.0) {
        // On the face alpha + beta = 1: hazard - x = alpha (1 - x).
        double num = 0.0;
        double den = 0.0;
        for (const auto& p : h.points) {
            const double x = std::exp(-k * p.t);
            num += p.weight * (1.0 - x) * (p.hazard - x);
            den += p.weight * (1.0 - x) * (1.0 - x);
        }
        fit.alpha = std::clamp(den > 0.0 ? num / den : 1.0, kMinChurn, 1.0);
        fit.beta = 1.0 - fit.alpha;
        fit.clamped = true;
    }
    fit.rss = weighted_rss(h, k, fit.alpha, fit.beta);
    return fit;
}

} // namespace detail

struct FitOptions
{
    double k_min = 0.001;
    double k_max = 2.0;
    std::size_t coarse_points = 81; ///< log-spaced scan before golden-section refinement
    double relative_tolerance = 1e-8;
    std::size_t max_iterations = 200;
};

/**
 * Fits cr_nat + (cr_init - cr_nat) e^{-kt} to a hazard series by separable least
 * squares: for fixed k the model is linear in (cr_nat, cr_init - cr_nat), so only
 * k is searched, first on a log grid and then by golden section.
 */
[[nodiscard]] inline FitResult fit_churn_curve(const HazardSeries& hazards, const FitOptions& opts = {})
{
    if (hazards.points.size() < 3) {
        throw ValidationError("hazards", "at least 3 hazard points are needed to fit 3 parameters (got " +
                                             std::to_string(hazards.points.size()) + ")");
    }
    for (const auto& p : hazards.points) {
        if (!(p.hazard >= 0.0 && p.hazard <= 1.0)) {
            throw ValidationError("hazards[" + std::to_string(p.t) + "]", "hazard must lie in [0, 1]");
        }
        if (!(p.weight > 0.0)) {
            throw ValidationError("hazards[" + std::to_string(p.t) + "]", "weight must be > 0");
        }
    }

    FitResult out;
    out.diagnostics = hazards.diagnostics;
    out.churn.p_trial_churn = hazards.trial_churn.value_or(0.0);
    for (const auto& p : hazards.points) {
        out.observed.push_back(p.hazard);
    }

    auto finish = [&](double alpha, double beta, double k) {
        out.churn.cr_nat = alpha;
        out.churn.cr_init = alpha + beta;
        out.churn.k = k;
        out.rss = detail::weighted_rss(hazards, k, alpha, beta);
        out.fitted.clear();
        for (const auto& p : hazards.points) {
            out.fitted.push_back(alpha + beta * std::exp(-k * p.t));
        }
        out.recommended_region = out.churn.in_recommended_region();
        out.churn.validate();
    };

    const auto [lo_it, hi_it] = std::minmax_element(hazards.points.begin(), hazards.points.end(),
                                                    [](const auto& a, const auto& b) { return a.hazard < b.hazard; });
    if (hi_it->hazard - lo_it->hazard <= 1e-12 * std::max(1.0, hi_it->hazard)) {
        double w = 0.0;
        double my = 0.0;
        for (const auto& p : hazards.points) {
            w += p.weight;
            my += p.weight * p.hazard;
        }
        my /= w;
        if (!(my > 0.0)) {
            throw ValidationError("hazards", "no churn observed; cr_nat must be > 0");
        }
        out.constant_model = true;
        out.converged = true;
        out.diagnostics.push_back("hazards are constant; decay constant not identifiable, k set to 1");
        finish(my, 0.0, 1.0);
        return out;
    }

    // Coarse log-spaced scan.
    const std::size_t n = std::max<std::size_t>(opts.coarse_points, 3);
    std::vector<double> ks(n);
    std::vector<double> rss(n);
    for (std::size_t i = 0; i < n; ++i) {
        ks[i] = opts.k_min * std::pow(opts.k_max / opts.k_min, static_cast<double>(i) / static_cast<double>(n - 1));
        rss[i] = detail::fit_linear(hazards, ks[i]).rss;
    }
    const std::size_t best = static_cast<std::size_t>(std::min_element(rss.begin(), rss.end()) - rss.begin());
    double a = ks[best == 0 ? 0 : best - 1];
    double b = ks[best + 1 >= n ? n - 1 : best + 1];

    // Golden section on [a, b].
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = b - kInvPhi * (b - a);
    double x2 = a + kInvPhi * (b - a);
    double f1 = detail::fit_linear(hazards, x1).rss;
    double f2 = detail::fit_linear(hazards, x2).rss;
    double best_k = ks[best];
    double best_rss = rss[best];
    auto note = [&](double k, double f) {
        if (f < best_rss) {
            best_rss = f;
            best_k = k;
        }
    };
    note(x1, f1);
    note(x2, f2);

    while (out.iterations < opts.max_iterations) {
        if (b - a <= opts.relative_tolerance * 0.5 * (a + b)) {
            out.converged = true;
            break;
        }
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = detail::fit_linear(hazards, x1).rss;
            note(x1, f1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = detail::fit_linear(hazards, x2).rss;
            note(x2, f2);
        }
        ++out.iterations;
        out.residual_history.push_back(best_rss);
    }
    if (!out.converged) {
        out.diagnostics.push_back("golden-section search hit the iteration cap");
    }
    if (best_k >= opts.k_max * (1.0 - 1e-6) || best_k <= opts.k_min * (1.0 + 1e-6)) {
        out.diagnostics.push_back("decay constant at the edge of the search range");
    }

    const auto lin = detail::fit_linear(hazards, best_k);
    out.clamped = lin.clamped;
    if (lin.clamped) {
        out.diagnostics.push_back("least-squares solution clamped to parameter bounds");
    }
    finish(lin.alpha, lin.beta, best_k);
    return out;
}

/// Convenience: hazards + fit, with trial churn from estimate_trial_churn.
[[nodiscard]] inline FitResult calibrate(const CohortTable& table, const FitOptions& opts = {})
{
    auto hazards = hazard_rates(table);
    hazards.trial_churn = estimate_trial_churn(table);
    return fit_churn_curve(hazards, opts);
}

/**
 * Synthetic cohorts from known parameters, rows for periods 0..periods+1 so that
 * hazards 1..periods are observable: A_0 = 1, A_1 = 1 - p_trial_churn,
 * A_{t+1} = A_t (1 - h_t) with h_t the model hazard. With noise > 0 each hazard
 * is scaled by (1 + noise * z), z standard normal, and clamped to [0, 1].
 * Output is cohort CSV, one cohort per id "c0", "c1", ...
 */
inline void write_synthetic_cohorts(std::ostream& os, const ChurnParams& params, int periods, int cohorts,
                                    double noise, std::uint64_t seed)
{
    params.validate();
    if (periods < 1) {
        throw ValidationError("periods", "must be >= 1");
    }
    if (cohorts < 1) {
        throw ValidationError("cohorts", "must be >= 1");
    }
    if (!(noise >= 0.0) || !std::isfinite(noise)) {
        throw ValidationError("noise", "must be a finite number >= 0");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::array<char, 64> buf{};
    os << "cohort_id,period,active_fraction\n";
    for (int c = 0; c < cohorts; ++c) {
        double active = 1.0;
        for (int t = 0; t <= periods + 1; ++t) {
            const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), active);
            os << 'c' << c << ',' << t << ',' << std::string_view(buf.data(), ptr - buf.data()) << '\n';
            double drop = t == 0 ? params.p_trial_churn : conditional_churn(params, t);
            if (t > 0 && noise > 0.0) {
                drop = std::clamp(drop * (1.0 + noise * z(rng)), 0.0, 1.0);
            }
            active *= 1.0 - drop;
        }
    }
}

} // namespace scvlab
