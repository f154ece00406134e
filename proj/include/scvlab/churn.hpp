// scvlab/churn.hpp
#pragma once

#include "scvlab/errors.hpp"
#include "scvlab/params.hpp"

#include <cmath>
#include <cstddef>
#include <string>

namespace scvlab {

enum class ProbModel
{
    Exact,  ///< product-form survival, the ground truth
    Approx, ///< survival replaced by (1 - alpha - beta)^(t-1)
};

/// Neumaier-compensated running sum.
class CompensatedSum
{
public:
    void add(double x) noexcept
    {
        const double t = m_sum + x;
        if (std::fabs(m_sum) >= std::fabs(x)) {
            m_comp += (m_sum - t) + x;
        } else {
            m_comp += (x - t) + m_sum;
        }
        m_sum = t;
    }

    [[nodiscard]] double value() const noexcept { return m_sum + m_comp; }

private:
    double m_sum = 0.0;
    double m_comp = 0.0;
};

/**
 * How many periods a series evaluation sums.
 *
 * Adaptive picks the smallest T with (1 - cr_nat)^T * (T + 1/cr_nat) < tail_tolerance.
 * That quantity bounds the relative tail of the first moment sum(t * P_t) for the
 * exact model, and it also dominates gamma * (1 - cr_nat)^T, the leftover survival mass.
 */
struct TruncationPolicy
{
    enum class Mode
    {
        Adaptive,
        Fixed,
    };

    Mode mode = Mode::Adaptive;
    std::size_t fixed_horizon = 0;
    double tail_tolerance = 1e-12;
    std::size_t cap = 1'000'000;

    [[nodiscard]] static TruncationPolicy adaptive(double tail_tolerance = 1e-12)
    {
        TruncationPolicy p;
        p.tail_tolerance = tail_tolerance;
        return p;
    }

    [[nodiscard]] static TruncationPolicy fixed(std::size_t horizon)
    {
        TruncationPolicy p;
        p.mode = Mode::Fixed;
        p.fixed_horizon = horizon;
        return p;
    }
};

/// Number of periods to sum for `params` under `policy`.
[[nodiscard]] inline std::size_t resolve_horizon(const ChurnParams& params, const TruncationPolicy& policy)
{
    if (policy.mode == TruncationPolicy::Mode::Fixed) {
        if (policy.fixed_horizon == 0) {
            throw ValidationError("horizon", "fixed horizon must be >= 1");
        }
        return policy.fixed_horizon;
    }

    const double survive = 1.0 - params.alpha();
    const double mean_remaining = 1.0 / params.alpha();
    double decay = 1.0;
    for (std::size_t t = 1; t <= policy.cap; ++t) {
        decay *= survive;
        if (decay * (static_cast<double>(t) + mean_remaining) < policy.tail_tolerance) {
            return t;
        }
    }
    throw ConvergenceError("tail bound " + std::to_string(policy.tail_tolerance) + " not reached within " +
                           std::to_string(policy.cap) + " periods (cr_nat too small)");
}

/// Hazard p_C(t) = cr_nat + (cr_init - cr_nat) e^{-kt}. t = 0 returns cr_init.
[[nodiscard]] inline double conditional_churn(const ChurnParams& params, double t) noexcept
{
    return params.alpha() + params.beta() * std::exp(-params.k * t);
}

/**
 * Overall probability of churning exactly at paid period t (t >= 1):
 * gamma * prod_{i=1}^{t-1} (1 - p_C(i)) * p_C(t). O(t); use ExactChurnSeries to iterate.
 */
[[nodiscard]] inline double churn_prob_exact(const ChurnParams& params, std::size_t t)
{
    if (t == 0) {
        throw ValidationError("t", "paid periods start at 1");
    }
    double survival = params.gamma();
    for (std::size_t i = 1; i < t; ++i) {
        survival *= 1.0 - conditional_churn(params, static_cast<double>(i));
    }
    return survival * conditional_churn(params, static_cast<double>(t));
}

/// gamma * (1 - alpha - beta)^(t-1) * p_C(t).
[[nodiscard]] inline double churn_prob_approx(const ChurnParams& params, std::size_t t)
{
    if (t == 0) {
        throw ValidationError("t", "paid periods start at 1");
    }
    const double base = 1.0 - params.cr_init;
    return params.gamma() * std::pow(base, static_cast<double>(t - 1)) *
           conditional_churn(params, static_cast<double>(t));
}

/**
 * Incremental generator of P_C(1), P_C(2), ... for either model. Each call to
 * next() advances one period in O(1).
 */
class ChurnSeries
{
public:
    ChurnSeries(const ChurnParams& params, ProbModel model)
        : m_params(params)
        , m_model(model)
        , m_survival(params.gamma())
    {
    }

    /// Probability of churning at the next period.
    double next() noexcept
    {
        ++m_t;
        const double hazard = conditional_churn(m_params, static_cast<double>(m_t));
        const double p = m_survival * hazard;
        m_survival *= m_model == ProbModel::Exact ? 1.0 - hazard : 1.0 - m_params.cr_init;
        return p;
    }

    [[nodiscard]] std::size_t period() const noexcept { return m_t; }

private:
    ChurnParams m_params;
    ProbModel m_model;
    double m_survival;
    std::size_t m_t = 0;
};

[[nodiscard]] inline std::string to_string(ProbModel model)
{
    return model == ProbModel::Exact ? "exact" : "approx";
}

} // namespace scvlab
