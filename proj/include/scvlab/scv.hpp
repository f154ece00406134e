// scvlab/scv.hpp
#pragma once

#include "scvlab/churn.hpp"
#include "scvlab/errors.hpp"
#include "scvlab/params.hpp"

#include <cmath>
#include <cstddef>
#include <string>

namespace scvlab {

enum class ModelKind
{
    ConstantClosed,
    ExponentialClosed,
    ExactSeries,
    ApproxSeries,
};

struct ScvBreakdown
{
    double scv = 0.0;
    double acquisition_term = 0.0; ///< (CAC_mean + CC) times the exit mass accounted for
    double retention_term = 0.0;   ///< r_pt * sum(t * P_C(t))
    double tau_mean = 0.0;         ///< expected periods to exit, trial included
    double normalization = 0.0;    ///< P_C(Tr) + sum(P_C(t)) actually represented
    ModelKind model_kind = ModelKind::ExponentialClosed;
    std::size_t horizon = 0;       ///< periods summed; 0 for closed forms
    bool recommended_region = true;
};

/**
 * The bracket that multiplies gamma * r_pt in the closed form:
 *
 *   cr_nat / cr_init^2 + (cr_init - cr_nat) e^{-k} / ((1 - e^{-k}) + cr_init e^{-k})^2
 *
 * It equals sum_{t>=1} t * P_C(t) / gamma under the approximate probabilities.
 */
[[nodiscard]] inline double retention_bracket(const ChurnParams& params)
{
    if (!(params.cr_init > 0.0)) {
        throw ValidationError("churn.cr_init", "closed form is singular at cr_init = 0");
    }
    const double e = std::exp(-params.k);
    const double denom = (1.0 - e) + params.cr_init * e;
    return params.cr_nat / (params.cr_init * params.cr_init) + params.beta() * e / (denom * denom);
}

/**
 * Probability mass carried by the approximate series over all paid periods:
 * alpha gamma / (alpha + beta) + beta gamma e^{-k} / (1 - (1 - alpha - beta) e^{-k}).
 */
[[nodiscard]] inline double approx_paid_mass(const ChurnParams& params)
{
    const double e = std::exp(-params.k);
    const double g = params.gamma();
    return params.alpha() * g / params.cr_init + params.beta() * g * e / (1.0 - (1.0 - params.cr_init) * e);
}

/// Mean number of periods before exit, trial period included. Always >= 1.
[[nodiscard]] inline double mean_time_to_churn(const ChurnParams& params)
{
    params.validate();
    return 1.0 + params.gamma() * retention_bracket(params);
}

/// Closed form with constant post-trial churn p_churn.
[[nodiscard]] inline ScvBreakdown scv_constant_closed(double p_trial_churn, double p_churn, const CostParams& costs)
{
    if (!std::isfinite(p_trial_churn) || p_trial_churn < 0.0 || p_trial_churn > 1.0) {
        throw ValidationError("churn.p_trial_churn", "must lie in [0, 1]");
    }
    if (!std::isfinite(p_churn) || p_churn < 0.0 || p_churn > 1.0) {
        throw ValidationError("churn.p_churn", "must lie in (0, 1]");
    }
    if (p_churn == 0.0) {
        throw ConvergenceError("constant churn of 0 gives an infinite expected lifetime");
    }
    const double gamma = 1.0 - p_trial_churn;

    ScvBreakdown out;
    out.model_kind = ModelKind::ConstantClosed;
    out.acquisition_term = cac_mean(costs) + costs.cc;
    out.retention_term = costs.r_pt * gamma / p_churn;
    out.scv = out.acquisition_term + out.retention_term;
    out.tau_mean = 1.0 + gamma / p_churn;
    out.normalization = 1.0;
    out.recommended_region = p_churn > 0.001 && p_churn < 1.0 && gamma > 0.001 && gamma < 1.0;
    return out;
}

/// Closed form of the approximate exponential-decay model.
[[nodiscard]] inline ScvBreakdown scv_exponential_closed(const ChurnParams& params, const CostParams& costs)
{
    params.validate();
    const double bracket = retention_bracket(params);

    ScvBreakdown out;
    out.model_kind = ModelKind::ExponentialClosed;
    out.acquisition_term = cac_mean(costs) + costs.cc;
    out.retention_term = params.gamma() * costs.r_pt * bracket;
    out.scv = out.acquisition_term + out.retention_term;
    out.tau_mean = 1.0 + params.gamma() * bracket;
    out.normalization = params.p_trial_churn + approx_paid_mass(params);
    out.recommended_region = params.in_recommended_region();
    return out;
}

/**
 * Direct summation
 *
 *   SCV = P_C(Tr) (CAC_mean + CC) + sum_{t=1}^{T} P_C(t) (CAC_mean + CC + t r_pt)
 *
 * with P_C(t) from the chosen probability model. This is the reference the
 * closed forms are checked against.
 */
[[nodiscard]] inline ScvBreakdown
scv_series(const ChurnParams& params, const CostParams& costs, ProbModel model,
           const TruncationPolicy& truncation = TruncationPolicy::adaptive())
{
    params.validate();
    const double acquisition = cac_mean(costs) + costs.cc;
    const std::size_t horizon = resolve_horizon(params, truncation);

    CompensatedSum mass;
    CompensatedSum first_moment;
    mass.add(params.p_trial_churn);
    ChurnSeries series(params, model);
    for (std::size_t t = 1; t <= horizon; ++t) {
        const double p = series.next();
        mass.add(p);
        first_moment.add(static_cast<double>(t) * p);
    }

    ScvBreakdown out;
    out.model_kind = model == ProbModel::Exact ? ModelKind::ExactSeries : ModelKind::ApproxSeries;
    out.normalization = mass.value();
    out.acquisition_term = acquisition * out.normalization;
    out.retention_term = costs.r_pt * first_moment.value();
    out.scv = out.acquisition_term + out.retention_term;
    out.tau_mean = out.normalization + first_moment.value();
    out.horizon = horizon;
    out.recommended_region = params.in_recommended_region();
    return out;
}

/// 1 - (P_C(Tr) + sum P_C(t)). Tends to 0 for Exact, to a positive constant for Approx.
[[nodiscard]] inline double normalization_deficit(const ChurnParams& params, ProbModel model,
                                                  const TruncationPolicy& truncation = TruncationPolicy::adaptive())
{
    params.validate();
    const std::size_t horizon = resolve_horizon(params, truncation);
    CompensatedSum mass;
    mass.add(params.p_trial_churn);
    ChurnSeries series(params, model);
    for (std::size_t t = 1; t <= horizon; ++t) {
        mass.add(series.next());
    }
    return 1.0 - mass.value();
}

[[nodiscard]] inline std::string to_string(ModelKind kind)
{
    switch (kind) {
    case ModelKind::ConstantClosed:
        return "const-closed";
    case ModelKind::ExponentialClosed:
        return "exp-closed";
    case ModelKind::ExactSeries:
        return "exact-series";
    case ModelKind::ApproxSeries:
        return "approx-series";
    }
    return "unknown";
}

[[nodiscard]] inline ModelKind parse_model_kind(const std::string& text)
{
    if (text == "const-closed") {
        return ModelKind::ConstantClosed;
    }
    if (text == "exp-closed") {
        return ModelKind::ExponentialClosed;
    }
    if (text == "exact-series") {
        return ModelKind::ExactSeries;
    }
    if (text == "approx-series") {
        return ModelKind::ApproxSeries;
    }
    throw ValidationError("model", "unknown model '" + text +
                                       "' (expected exp-closed, const-closed, exact-series or approx-series)");
}

/**
 * Dispatch by model kind. const-closed uses cr_init as the constant churn rate.
 */
[[nodiscard]] inline ScvBreakdown evaluate_scv(const ChurnParams& params, const CostParams& costs, ModelKind kind,
                                               const TruncationPolicy& truncation = TruncationPolicy::adaptive())
{
    switch (kind) {
    case ModelKind::ConstantClosed:
        params.validate();
        return scv_constant_closed(params.p_trial_churn, params.cr_init, costs);
    case ModelKind::ExponentialClosed:
        return scv_exponential_closed(params, costs);
    case ModelKind::ExactSeries:
        return scv_series(params, costs, ProbModel::Exact, truncation);
    case ModelKind::ApproxSeries:
        return scv_series(params, costs, ProbModel::Approx, truncation);
    }
    throw ValidationError("model", "unknown model kind");
}

} // namespace scvlab
