// scvlab/sensitivity.hpp
#pragma once

#include "scvlab/errors.hpp"
#include "scvlab/params.hpp"
#include "scvlab/scv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace scvlab {

/// Inputs of the closed-form SCV, in the order the report lists them.
enum class Parameter : std::size_t
{
    CacMean = 0,
    Cc,
    TrialPath, ///< reported under "gamma"; the derivative is taken w.r.t. p_trial_churn
    RPt,
    CrNat,
    CrInit,
    K,
};

inline constexpr std::size_t kParameterCount = 7;

inline constexpr std::array<Parameter, kParameterCount> kAllParameters{
    Parameter::CacMean, Parameter::Cc,     Parameter::TrialPath, Parameter::RPt,
    Parameter::CrNat,   Parameter::CrInit, Parameter::K,
};

[[nodiscard]] constexpr std::string_view parameter_name(Parameter p) noexcept
{
    constexpr std::array<std::string_view, kParameterCount> names{"CAC_mean", "CC",      "gamma", "R_pt",
                                                                  "CR_nat",   "CR_init", "k"};
    return names[static_cast<std::size_t>(p)];
}

struct SensitivityEntry
{
    Parameter parameter = Parameter::CacMean;
    double analytic = 0.0;
    std::optional<double> numeric;
    std::optional<double> relative_error; ///< |analytic - numeric| / |analytic|
    std::optional<double> absolute_error;
};

struct SensitivityReport
{
    std::array<SensitivityEntry, kParameterCount> entries{};
    std::optional<double> step; ///< relative finite-difference step, when numeric values are present

    [[nodiscard]] const SensitivityEntry& operator[](Parameter p) const
    {
        return entries[static_cast<std::size_t>(p)];
    }
    [[nodiscard]] SensitivityEntry& operator[](Parameter p) { return entries[static_cast<std::size_t>(p)]; }
};

/// d SCV / d CR_init of the closed form.
[[nodiscard]] inline double partial_cr_init(const ChurnParams& params, double r_pt)
{
    const double ci = params.cr_init;
    const double cn = params.cr_nat;
    const double e = std::exp(-params.k);
    const double denom = (1.0 - e) + ci * e;
    return params.gamma() * r_pt *
           (-2.0 * cn / (ci * ci * ci) + (e * (1.0 - e) + (2.0 * cn - ci) * e * e) / (denom * denom * denom));
}

/// Closed-form partials of SCV with respect to each of its seven inputs.
[[nodiscard]] inline SensitivityReport analytic_gradient(const ChurnParams& params, const CostParams& costs)
{
    params.validate();
    costs.validate();

    const double ci = params.cr_init;
    const double g = params.gamma();
    const double r = costs.r_pt;
    const double e = std::exp(-params.k);
    const double denom = (1.0 - e) + ci * e;
    const double bracket = retention_bracket(params);

    SensitivityReport rep;
    for (auto p : kAllParameters) {
        rep[p].parameter = p;
    }
    rep[Parameter::CacMean].analytic = 1.0;
    rep[Parameter::Cc].analytic = 1.0;
    rep[Parameter::TrialPath].analytic = -r * bracket;
    rep[Parameter::RPt].analytic = g * bracket;
    rep[Parameter::CrNat].analytic = g * r / (ci * ci) - g * r * e / (denom * denom);
    rep[Parameter::CrInit].analytic = partial_cr_init(params, r);
    rep[Parameter::K].analytic = -g * r * (params.beta() * e) * ((1.0 + (1.0 - ci) * e) / (denom * denom * denom));
    return rep;
}

namespace detail {

struct Perturbable
{
    ChurnParams churn;
    CostParams costs;
};

inline double read(const Perturbable& x, Parameter p)
{
    switch (p) {
    case Parameter::CacMean:
        return cac_mean(x.costs);
    case Parameter::Cc:
        return x.costs.cc;
    case Parameter::TrialPath:
        return x.churn.p_trial_churn;
    case Parameter::RPt:
        return x.costs.r_pt;
    case Parameter::CrNat:
        return x.churn.cr_nat;
    case Parameter::CrInit:
        return x.churn.cr_init;
    case Parameter::K:
        return x.churn.k;
    }
    return 0.0;
}

inline void shift(Perturbable& x, Parameter p, double h)
{
    switch (p) {
    case Parameter::CacMean:
        // Moving every channel by h moves the share-weighted mean by h.
        for (auto& ch : x.costs.channels) {
            ch.cac += h;
        }
        break;
    case Parameter::Cc:
        x.costs.cc += h;
        break;
    case Parameter::TrialPath:
        x.churn.p_trial_churn += h;
        break;
    case Parameter::RPt:
        x.costs.r_pt += h;
        break;
    case Parameter::CrNat:
        x.churn.cr_nat += h;
        break;
    case Parameter::CrInit:
        x.churn.cr_init += h;
        break;
    case Parameter::K:
        x.churn.k += h;
        break;
    }
}

inline void check_interior(const Perturbable& x, Parameter p, double h)
{
    const auto& c = x.churn;
    auto fail = [&](const char* field) {
        throw ValidationError(field, "within one finite-difference step of the domain boundary");
    };
    switch (p) {
    case Parameter::TrialPath:
        if (c.p_trial_churn - h < 0.0 || c.p_trial_churn + h > 1.0) {
            fail("churn.p_trial_churn");
        }
        break;
    case Parameter::CrNat:
        if (c.cr_nat - h <= 0.0 || c.cr_nat + h > c.cr_init) {
            fail("churn.cr_nat");
        }
        break;
    case Parameter::CrInit:
        if (c.cr_init - h < c.cr_nat || c.cr_init + h > 1.0) {
            fail("churn.cr_init");
        }
        break;
    case Parameter::K:
        if (c.k - h <= 0.0) {
            fail("churn.k");
        }
        break;
    default:
        break;
    }
}

} // namespace detail

/**
 * Central differences of scv_exponential_closed, one parameter at a time, with
 * step h = step * max(|x|, 1). Each entry's `analytic` is also filled and the
 * errors against it computed, so the report doubles as a gradient check.
 */
[[nodiscard]] inline SensitivityReport numeric_gradient(const ChurnParams& params, const CostParams& costs,
                                                        double step = 1e-6)
{
    if (!(step > 0.0) || !std::isfinite(step)) {
        throw ValidationError("step", "must be a positive finite number");
    }
    SensitivityReport rep = analytic_gradient(params, costs);
    rep.step = step;
    const detail::Perturbable base{params, costs};

    for (auto p : kAllParameters) {
        const double x = detail::read(base, p);
        const double h = step * std::max(std::fabs(x), 1.0);
        detail::check_interior(base, p, h);

        auto plus = base;
        auto minus = base;
        detail::shift(plus, p, h);
        detail::shift(minus, p, -h);
        const double f_plus = scv_exponential_closed(plus.churn, plus.costs).scv;
        const double f_minus = scv_exponential_closed(minus.churn, minus.costs).scv;
        const double numeric = (f_plus - f_minus) / (2.0 * h);

        auto& entry = rep[p];
        entry.numeric = numeric;
        entry.absolute_error = std::fabs(entry.analytic - numeric);
        if (entry.analytic != 0.0) {
            entry.relative_error = *entry.absolute_error / std::fabs(entry.analytic);
        }
    }
    return rep;
}

/// Chain rule: sum over parameters of (d SCV / d x_i)(d x_i / d F). Keys are parameter names.
[[nodiscard]] inline double feature_sensitivity(const SensitivityReport& report,
                                                const std::map<std::string, double, std::less<>>& factor_jacobian)
{
    double total = 0.0;
    for (auto p : kAllParameters) {
        const auto it = factor_jacobian.find(parameter_name(p));
        if (it == factor_jacobian.end()) {
            throw ValidationError("jacobian." + std::string(parameter_name(p)), "missing entry");
        }
        if (!std::isfinite(it->second)) {
            throw ValidationError("jacobian." + std::string(parameter_name(p)), "must be finite");
        }
        total += report[p].analytic * it->second;
    }
    return total;
}

/// Number of interior samples used to check that tau is monotone in cr_init before bisecting.
inline constexpr int kMonotoneProbes = 16;

/**
 * Solves mean_time_to_churn(cr_init) = tau_target for cr_init in [cr_nat, 1],
 * holding cr_nat, k and p_trial_churn at their values in `params`.
 */
[[nodiscard]] inline double invert_cr_init_from_tau(double tau_target, const ChurnParams& params)
{
    params.validate();
    if (!std::isfinite(tau_target)) {
        throw ValidationError("tau", "must be finite");
    }
    auto tau_at = [&](double cr_init) {
        ChurnParams p = params;
        p.cr_init = cr_init;
        return 1.0 + p.gamma() * retention_bracket(p);
    };

    const double lo = params.cr_nat;
    const double hi = 1.0;
    const double tau_lo = tau_at(lo);
    const double tau_hi = tau_at(hi);

    // Endpoints plus evenly spaced interior samples must be strictly monotone.
    double prev = tau_lo;
    const double direction = tau_hi - tau_lo;
    for (int i = 1; i <= kMonotoneProbes + 1; ++i) {
        const double c = lo + (hi - lo) * static_cast<double>(i) / (kMonotoneProbes + 1);
        const double cur = tau_at(c);
        if (!((cur - prev) * direction > 0.0)) {
            throw NoSolutionError("mean time to churn is not monotone in cr_init on [cr_nat, 1]; inversion ambiguous");
        }
        prev = cur;
    }

    const double tau_min = std::min(tau_lo, tau_hi);
    const double tau_max = std::max(tau_lo, tau_hi);
    if (tau_target < tau_min || tau_target > tau_max) {
        throw NoSolutionError("tau " + std::to_string(tau_target) + " outside reachable range [" +
                              std::to_string(tau_min) + ", " + std::to_string(tau_max) + "]");
    }

    // Keep the invariant sign(tau(a) - target) != sign(tau(b) - target).
    double a = lo;
    double b = hi;
    const bool decreasing = direction < 0.0;
    for (int iter = 0; iter < 200 && b - a > 0.0; ++iter) {
        const double mid = 0.5 * (a + b);
        if (mid <= a || mid >= b) {
            break;
        }
        const double tm = tau_at(mid);
        if (tm == tau_target) {
            return mid;
        }
        if ((tm > tau_target) == decreasing) {
            a = mid;
        } else {
            b = mid;
        }
    }
    // Pick whichever end lands closer.
    return std::fabs(tau_at(a) - tau_target) <= std::fabs(tau_at(b) - tau_target) ? a : b;
}

/// Bucket move expressed as a change in mean time to churn.
struct FactorShift
{
    double tau_from = 0.0;
    double tau_to = 0.0;
    double share_delta = 1.0;

    void validate() const
    {
        if (!(tau_from >= 1.0)) {
            throw ValidationError("tau_from", "must be >= 1");
        }
        if (!(tau_to >= 1.0)) {
            throw ValidationError("tau_to", "must be >= 1");
        }
        if (!(share_delta > 0.0 && share_delta <= 1.0)) {
            throw ValidationError("share_delta", "must lie in (0, 1]");
        }
    }
};

struct WhatIfResult
{
    double cr_init_from = 0.0;
    double cr_init_to = 0.0;
    double partial_from = 0.0;
    double partial_to = 0.0;
    double mean_partial = 0.0; ///< two-point average of d SCV / d CR_init
    double delta_cr_init = 0.0;
    double share_delta = 1.0;
    double delta_scv = 0.0;
    std::optional<double> tau_from;
    std::optional<double> tau_to;
};

inline constexpr std::string_view kWhatIfCaveat =
    "linear extrapolation from the two-point mean derivative; non-linear effects are not captured";

/// Delta SCV for moving cr_init between two endpoints, other parameters held fixed.
[[nodiscard]] inline WhatIfResult cr_init_shift_delta(const ChurnParams& params, const CostParams& costs,
                                                      double cr_from, double cr_to, double share_delta = 1.0)
{
    costs.validate();
    if (!(share_delta > 0.0 && share_delta <= 1.0)) {
        throw ValidationError("share_delta", "must lie in (0, 1]");
    }
    ChurnParams from = params;
    from.cr_init = cr_from;
    from.validate();
    ChurnParams to = params;
    to.cr_init = cr_to;
    to.validate();

    WhatIfResult out;
    out.cr_init_from = cr_from;
    out.cr_init_to = cr_to;
    out.partial_from = partial_cr_init(from, costs.r_pt);
    out.partial_to = partial_cr_init(to, costs.r_pt);
    out.mean_partial = 0.5 * (out.partial_from + out.partial_to);
    out.delta_cr_init = cr_to - cr_from;
    out.share_delta = share_delta;
    out.delta_scv = out.mean_partial * out.delta_cr_init * share_delta;
    return out;
}

/// Inverts both tau endpoints to cr_init values and applies cr_init_shift_delta.
[[nodiscard]] inline WhatIfResult feature_shift_delta(const ChurnParams& params, const CostParams& costs,
                                                      const FactorShift& shift)
{
    shift.validate();
    const double cr_from = invert_cr_init_from_tau(shift.tau_from, params);
    const double cr_to = invert_cr_init_from_tau(shift.tau_to, params);
    WhatIfResult out = cr_init_shift_delta(params, costs, cr_from, cr_to, shift.share_delta);
    out.tau_from = shift.tau_from;
    out.tau_to = shift.tau_to;
    return out;
}

} // namespace scvlab
