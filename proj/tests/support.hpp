// Test-only helpers: case-study fixtures, seeded samplers, independent oracles
// and a subprocess runner for the CLI.
#pragma once

#include "scvlab/params.hpp"
#include "scvlab/scv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

namespace scvlab::testing {

inline ChurnParams case_study_churn()
{
    return ChurnParams{0.30, 0.05, 0.6, 0.36};
}

inline CostParams case_study_costs()
{
    return single_channel_costs(-35.0, 0.0, 6.0);
}

/// Seeded generator of valid parameter sets inside the recommended region.
class ParamSampler
{
public:
    explicit ParamSampler(std::uint64_t seed)
        : m_rng(seed)
    {
    }

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(m_rng); }

    ChurnParams churn()
    {
        const double alpha = uniform(0.002, 0.95);
        const double beta = uniform(0.001, 1.0 - alpha - 0.0005);
        const double gamma = uniform(0.002, 0.999);
        const double k = uniform(0.002, 0.999);
        return ChurnParams{alpha + beta, alpha, k, 1.0 - gamma};
    }

    /// Points kept away from every boundary, for finite differences.
    ChurnParams interior_churn()
    {
        const double alpha = uniform(0.01, 0.6);
        const double beta = uniform(0.01, 0.95 - alpha);
        const double gamma = uniform(0.05, 0.95);
        const double k = uniform(0.02, 0.98);
        return ChurnParams{alpha + beta, alpha, k, 1.0 - gamma};
    }

    CostParams costs()
    {
        const double cac = uniform(-100.0, -1.0);
        const double share = uniform(0.1, 0.9);
        CostParams c;
        c.channels = {{share, cac}, {1.0 - share, uniform(-100.0, -1.0)}};
        c.cc = uniform(-10.0, 5.0);
        c.r_pt = uniform(0.5, 50.0);
        return c;
    }

    std::mt19937_64& engine() { return m_rng; }

private:
    std::mt19937_64 m_rng;
};

/// P_C(t) for the exact model, product recomputed from scratch in long double.
inline long double oracle_exact_prob(const ChurnParams& p, std::size_t t)
{
    long double prod = 1.0L;
    for (std::size_t i = 1; i < t; ++i) {
        prod *= 1.0L - (static_cast<long double>(p.cr_nat) +
                        static_cast<long double>(p.cr_init - p.cr_nat) * std::exp(-static_cast<long double>(p.k) * i));
    }
    const long double hazard = static_cast<long double>(p.cr_nat) +
                               static_cast<long double>(p.cr_init - p.cr_nat) * std::exp(-static_cast<long double>(p.k) * t);
    return (1.0L - p.p_trial_churn) * prod * hazard;
}

/// sum_{t=1}^{T} t * P_C(t) for the approximate model, termwise with powl, long double.
inline long double oracle_approx_first_moment(const ChurnParams& p, std::size_t horizon)
{
    long double sum = 0.0L;
    const long double g = 1.0L - p.p_trial_churn;
    const long double q = 1.0L - p.cr_init;
    for (std::size_t t = 1; t <= horizon; ++t) {
        const long double hazard =
            p.cr_nat + static_cast<long double>(p.cr_init - p.cr_nat) * std::exp(-static_cast<long double>(p.k) * t);
        sum += static_cast<long double>(t) * g * std::pow(q, static_cast<long double>(t - 1)) * hazard;
    }
    return sum;
}

/// Cohort active fractions A_0..A_periods with A_0 = 1, A_1 = gamma, A_{t+1} = A_t (1 - p_C(t)).
/// With noise > 0 each hazard is multiplied by (1 + noise * z), z standard normal.
inline std::vector<double> synthesize_cohort(const ChurnParams& p, int periods, double noise = 0.0,
                                             std::mt19937_64* rng = nullptr)
{
    std::vector<double> a{1.0, 1.0 - p.p_trial_churn};
    std::normal_distribution<double> z(0.0, 1.0);
    for (int t = 1; t < periods; ++t) {
        double hazard = p.cr_nat + (p.cr_init - p.cr_nat) * std::exp(-p.k * t);
        if (noise > 0.0 && rng != nullptr) {
            hazard = std::clamp(hazard * (1.0 + noise * z(*rng)), 0.0, 1.0);
        }
        a.push_back(a.back() * (1.0 - hazard));
    }
    return a;
}

inline std::string cohort_csv(const std::vector<std::vector<double>>& cohorts)
{
    std::ostringstream os;
    os.precision(17);
    os << "cohort_id,period,active_fraction\n";
    for (std::size_t c = 0; c < cohorts.size(); ++c) {
        for (std::size_t t = 0; t < cohorts[c].size(); ++t) {
            os << "c" << c << ',' << t << ',' << cohorts[c][t] << '\n';
        }
    }
    return os.str();
}

/// True when the mean time to churn is strictly monotone in cr_init on a dense
/// 2001-point scan of [cr_nat, 1], other parameters fixed.
inline bool tau_monotone_in_cr_init(const ChurnParams& p)
{
    constexpr int n = 2000;
    double prev = 0.0;
    int direction = 0;
    for (int j = 0; j <= n; ++j) {
        ChurnParams q = p;
        q.cr_init = std::min(1.0, p.cr_nat + (1.0 - p.cr_nat) * j / n);
        const double tau = mean_time_to_churn(q);
        if (j > 0) {
            const int d = tau < prev ? -1 : (tau > prev ? 1 : 0);
            if (d == 0 || (direction != 0 && d != direction)) {
                return false;
            }
            direction = d;
        }
        prev = tau;
    }
    return true;
}

inline double rel_err(double got, double want)
{
    return std::fabs(got - want) / std::max(std::fabs(want), 1e-300);
}

struct TempDir
{
    std::filesystem::path path;

    TempDir()
    {
        std::string tmpl = (std::filesystem::temp_directory_path() / "scvlab-XXXXXX").string();
        path = ::mkdtemp(tmpl.data());
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path write(const std::string& name, const std::string& content) const
    {
        const auto p = path / name;
        std::ofstream(p) << content;
        return p;
    }
};

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct CliResult
{
    int exit_code = -1;
    std::string out;
    std::string err;
};

/// Runs the CLI with `args` (already shell-quoted as needed).
inline CliResult run_cli(const std::string& args)
{
    TempDir dir;
    const auto out = dir.path / "stdout";
    const auto err = dir.path / "stderr";
    const std::string cmd = std::string(SCVLAB_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

inline std::string case_study_path()
{
    return std::string(SCVLAB_SOURCE_DIR) + "/examples/case-study.json";
}

} // namespace scvlab::testing
