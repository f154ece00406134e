// scvlab/params.hpp
#pragma once

#include "scvlab/errors.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace scvlab {

/**
 * Hazard-curve parameters of the exponential decay churn model.
 *
 * Conditional churn at period t is cr_nat + (cr_init - cr_nat) * exp(-k t).
 * The shorthands alpha/beta/gamma are exposed as accessors.
 */
struct ChurnParams
{
    double cr_init = 0.0;       ///< churn rate at t = 0
    double cr_nat = 0.0;        ///< asymptotic churn rate
    double k = 0.0;             ///< decay constant per period
    double p_trial_churn = 0.0; ///< probability of churning during the trial

    [[nodiscard]] double alpha() const noexcept { return cr_nat; }
    [[nodiscard]] double beta() const noexcept { return cr_init - cr_nat; }
    [[nodiscard]] double gamma() const noexcept { return 1.0 - p_trial_churn; }

    /// Region where the approximate closed form was validated.
    [[nodiscard]] bool in_recommended_region() const noexcept
    {
        const double a = alpha();
        const double b = beta();
        const double g = gamma();
        return a > 0.001 && a < 1.0 && b > 0.001 && b < 1.0 - a && g > 0.001 && g < 1.0 && k > 0.001 &&
               k < 1.0;
    }

    /// Throws ValidationError naming the first violated field.
    void validate(const std::string& prefix = "churn") const
    {
        auto finite = [&](double v, const char* name) {
            if (!std::isfinite(v)) {
                throw ValidationError(prefix + "." + name, "must be finite");
            }
        };
        finite(cr_init, "cr_init");
        finite(cr_nat, "cr_nat");
        finite(k, "k");
        finite(p_trial_churn, "p_trial_churn");

        if (!(cr_nat > 0.0)) {
            throw ValidationError(prefix + ".cr_nat", "must be > 0");
        }
        if (cr_init < cr_nat) {
            throw ValidationError(prefix + ".cr_init", "must be >= cr_nat");
        }
        if (cr_init > 1.0) {
            throw ValidationError(prefix + ".cr_init", "must be <= 1");
        }
        if (!(k > 0.0)) {
            throw ValidationError(prefix + ".k", "must be > 0");
        }
        if (p_trial_churn < 0.0 || p_trial_churn > 1.0) {
            throw ValidationError(prefix + ".p_trial_churn", "must lie in [0, 1]");
        }
    }
};

struct AcquisitionChannel
{
    double share = 0.0; ///< P_AC_i
    double cac = 0.0;   ///< signed cost contribution CAC_i
};

/// Signed money inputs. Costs are entered with their sign (a cost of $35 is -35).
struct CostParams
{
    std::vector<AcquisitionChannel> channels;
    double cc = 0.0;   ///< trial-retention cost
    double r_pt = 0.0; ///< net recurring revenue per paid period

    static constexpr double kShareTolerance = 1e-9;

    void validate(const std::string& prefix = "costs") const
    {
        if (channels.empty()) {
            throw ValidationError(prefix + ".channels", "at least one acquisition channel is required");
        }
        double total = 0.0;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            const auto& ch = channels[i];
            const std::string at = prefix + ".channels[" + std::to_string(i) + "]";
            if (!std::isfinite(ch.share) || ch.share < 0.0 || ch.share > 1.0) {
                throw ValidationError(at + ".share", "must lie in [0, 1]");
            }
            if (!std::isfinite(ch.cac)) {
                throw ValidationError(at + ".cac", "must be finite");
            }
            total += ch.share;
        }
        if (std::fabs(total - 1.0) > kShareTolerance) {
            throw ValidationError(prefix + ".channels", "shares must sum to 1 (got " + std::to_string(total) + ")");
        }
        if (!std::isfinite(cc)) {
            throw ValidationError(prefix + ".cc", "must be finite");
        }
        if (!std::isfinite(r_pt)) {
            throw ValidationError(prefix + ".r_pt", "must be finite");
        }
    }
};

/// Share-weighted mean acquisition cost.
[[nodiscard]] inline double cac_mean(const CostParams& costs)
{
    costs.validate();
    double sum = 0.0;
    for (const auto& ch : costs.channels) {
        sum += ch.share * ch.cac;
    }
    return sum;
}

/// Single-channel cost block, handy for tests and the constant-churn entry points.
[[nodiscard]] inline CostParams single_channel_costs(double cac, double cc, double r_pt)
{
    return CostParams{{AcquisitionChannel{1.0, cac}}, cc, r_pt};
}

} // namespace scvlab
