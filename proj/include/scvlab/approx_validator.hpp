// scvlab/approx_validator.hpp
#pragma once

#include "scvlab/churn.hpp"
#include "scvlab/errors.hpp"
#include "scvlab/params.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace scvlab {

// Domain on which the approximation is assessed.
inline constexpr double kSweepFloor = 0.001;
inline constexpr std::size_t kDeviationHorizon = 1000;

enum class AxisScale
{
    Linear,
    Log,
};

struct SweepAxis
{
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    AxisScale scale = AxisScale::Linear;

    [[nodiscard]] std::vector<double> values() const
    {
        std::vector<double> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            if (count == 1) {
                out.push_back(lo);
                break;
            }
            const double u = static_cast<double>(i) / static_cast<double>(count - 1);
            if (scale == AxisScale::Linear) {
                out.push_back(lo + (hi - lo) * u);
            } else {
                out.push_back(lo * std::pow(hi / lo, u));
            }
        }
        if (count > 1) {
            out.back() = hi;
        }
        return out;
    }
};

struct GridPoint
{
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double k = 0.0;

    [[nodiscard]] ChurnParams churn_params() const { return ChurnParams{alpha + beta, alpha, k, 1.0 - gamma}; }
};

/**
 * Cartesian grid over (alpha, beta, gamma, k). Beta is sampled as a fraction f of
 * its admissible span at each alpha: beta = floor + f * (1 - alpha - floor), so the
 * upper bound 1 - alpha is enforced pointwise. An explicit point list, when given,
 * replaces the axes.
 */
struct SweepGrid
{
    SweepAxis alpha{kSweepFloor, 0.99, 10, AxisScale::Linear};
    SweepAxis beta_fraction{0.0, 0.99, 10, AxisScale::Linear};
    SweepAxis gamma{kSweepFloor, 0.999, 10, AxisScale::Linear};
    SweepAxis k{kSweepFloor, 0.999, 10, AxisScale::Linear};
    std::vector<GridPoint> explicit_points;

    [[nodiscard]] static double beta_at(double alpha, double fraction)
    {
        return kSweepFloor + fraction * (1.0 - alpha - kSweepFloor);
    }

    void validate() const
    {
        if (!explicit_points.empty()) {
            for (std::size_t i = 0; i < explicit_points.size(); ++i) {
                const auto& p = explicit_points[i];
                const std::string at = "grid.points[" + std::to_string(i) + "]";
                if (!(p.alpha > 0.0 && p.alpha < 1.0)) {
                    throw ValidationError(at + ".alpha", "must lie in (0, 1)");
                }
                if (!(p.beta >= 0.0 && p.alpha + p.beta <= 1.0)) {
                    throw ValidationError(at + ".beta", "must lie in [0, 1 - alpha]");
                }
                if (!(p.gamma > 0.0 && p.gamma <= 1.0)) {
                    throw ValidationError(at + ".gamma", "must lie in (0, 1]");
                }
                if (!(p.k > 0.0)) {
                    throw ValidationError(at + ".k", "must be > 0");
                }
            }
            return;
        }
        check_axis("grid.alpha", alpha, 0.0, 1.0, false);
        check_axis("grid.beta_fraction", beta_fraction, 0.0, 1.0, true);
        check_axis("grid.gamma", gamma, 0.0, 1.0, false);
        check_axis("grid.k", k, 0.0, std::numeric_limits<double>::infinity(), false);
        if (alpha.hi + kSweepFloor >= 1.0) {
            throw ValidationError("grid.alpha.hi", "must leave room for beta >= 0.001");
        }
        if (size() == 0) {
            throw ValidationError("grid", "grid is empty");
        }
    }

    [[nodiscard]] std::size_t size() const
    {
        if (!explicit_points.empty()) {
            return explicit_points.size();
        }
        return alpha.count * beta_fraction.count * gamma.count * k.count;
    }

    /// All points in lexicographic (alpha, beta, gamma, k) order.
    [[nodiscard]] std::vector<GridPoint> points() const
    {
        if (!explicit_points.empty()) {
            return explicit_points;
        }
        std::vector<GridPoint> out;
        out.reserve(size());
        const auto gs = gamma.values();
        const auto ks = k.values();
        const auto fs = beta_fraction.values();
        for (double a : alpha.values()) {
            for (double f : fs) {
                const double b = beta_at(a, f);
                for (double g : gs) {
                    for (double kk : ks) {
                        out.push_back(GridPoint{a, b, g, kk});
                    }
                }
            }
        }
        return out;
    }

private:
    static void check_axis(const std::string& name, const SweepAxis& axis, double lo_bound, double hi_bound,
                           bool hi_open)
    {
        if (axis.count == 0) {
            throw ValidationError(name + ".count", "grid is empty");
        }
        if (!(axis.lo > lo_bound) && !(hi_open && axis.lo >= lo_bound)) {
            throw ValidationError(name + ".lo", "out of range");
        }
        if (axis.hi < axis.lo) {
            throw ValidationError(name + ".hi", "must be >= lo");
        }
        if (hi_open ? !(axis.hi < hi_bound) : axis.hi > hi_bound) {
            throw ValidationError(name + ".hi", "out of range");
        }
        if (axis.scale == AxisScale::Log && !(axis.lo > 0.0)) {
            throw ValidationError(name + ".lo", "log scale needs lo > 0");
        }
    }
};

struct DeviationRecord
{
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double k = 0.0;
    double total_abs_deviation = 0.0;
    double max_period_deviation = 0.0; ///< largest single-period |approx - exact|
};

/// Sum over t = 1..horizon of |P_approx(t) - P_exact(t)|.
[[nodiscard]] inline DeviationRecord deviation_record(const GridPoint& point,
                                                      std::size_t horizon = kDeviationHorizon)
{
    const ChurnParams params = point.churn_params();
    ChurnSeries exact(params, ProbModel::Exact);
    ChurnSeries approx(params, ProbModel::Approx);
    CompensatedSum total;
    double worst = 0.0;
    for (std::size_t t = 1; t <= horizon; ++t) {
        const double d = std::fabs(approx.next() - exact.next());
        total.add(d);
        worst = std::max(worst, d);
    }
    return DeviationRecord{point.alpha, point.beta, point.gamma, point.k, total.value(), worst};
}

[[nodiscard]] inline double total_abs_deviation(const ChurnParams& params, std::size_t horizon = kDeviationHorizon)
{
    return deviation_record(GridPoint{params.alpha(), params.beta(), params.gamma(), params.k}, horizon)
        .total_abs_deviation;
}

struct DeviationStats
{
    double average = 0.0;
    double min = 0.0;
    double max = 0.0;
    double stdev = 0.0; ///< population standard deviation
    std::size_t grid_points = 0;
    double max_period_deviation = 0.0;
};

/// Streaming (Welford) accumulator; records must be fed in grid order for reproducibility.
class DeviationStatsAccumulator
{
public:
    void add(const DeviationRecord& r) noexcept
    {
        const double x = r.total_abs_deviation;
        ++m_n;
        const double delta = x - m_mean;
        m_mean += delta / static_cast<double>(m_n);
        m_m2 += delta * (x - m_mean);
        m_min = std::min(m_min, x);
        m_max = std::max(m_max, x);
        m_period_max = std::max(m_period_max, r.max_period_deviation);
    }

    [[nodiscard]] DeviationStats stats() const
    {
        if (m_n == 0) {
            throw ValidationError("grid", "no records");
        }
        return DeviationStats{m_mean, m_min, m_max, std::sqrt(m_m2 / static_cast<double>(m_n)), m_n, m_period_max};
    }

private:
    std::size_t m_n = 0;
    double m_mean = 0.0;
    double m_m2 = 0.0;
    double m_min = std::numeric_limits<double>::infinity();
    double m_max = -std::numeric_limits<double>::infinity();
    double m_period_max = 0.0;
};

[[nodiscard]] inline DeviationStats stats_from_records(const std::vector<DeviationRecord>& records)
{
    DeviationStatsAccumulator acc;
    for (const auto& r : records) {
        acc.add(r);
    }
    return acc.stats();
}

using RecordSink = std::function<void(const DeviationRecord&)>;

/**
 * Evaluates every grid point and hands the records to `sink` in grid order.
 * Points are evaluated in blocks across `threads` workers; the merge is ordered,
 * so the output does not depend on the thread count.
 */
inline DeviationStats sweep(const SweepGrid& grid, const RecordSink& sink, unsigned threads = 0,
                            std::size_t horizon = kDeviationHorizon)
{
    grid.validate();
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    const auto points = grid.points();
    constexpr std::size_t kBlock = 2048;

    DeviationStatsAccumulator acc;
    std::vector<DeviationRecord> block;
    for (std::size_t start = 0; start < points.size(); start += kBlock) {
        const std::size_t n = std::min(kBlock, points.size() - start);
        block.assign(n, DeviationRecord{});
        const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
        {
            std::vector<std::jthread> pool;
            pool.reserve(workers);
            for (unsigned w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    for (std::size_t i = w; i < n; i += workers) {
                        block[i] = deviation_record(points[start + i], horizon);
                    }
                });
            }
        }
        for (const auto& r : block) {
            acc.add(r);
            if (sink) {
                sink(r);
            }
        }
    }
    return acc.stats();
}

struct SweepResult
{
    DeviationStats stats;
    std::vector<DeviationRecord> records;
};

[[nodiscard]] inline SweepResult sweep(const SweepGrid& grid, unsigned threads = 0)
{
    SweepResult out;
    out.records.reserve(grid.size());
    out.stats = sweep(grid, [&](const DeviationRecord& r) { out.records.push_back(r); }, threads);
    return out;
}

inline void write_csv_header(std::ostream& os)
{
    os << "alpha,beta,gamma,k,total_abs_deviation\n";
}

inline void write_csv_row(std::ostream& os, const DeviationRecord& r)
{
    std::array<char, 160> buf{};
    std::snprintf(buf.data(), buf.size(), "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.alpha, r.beta, r.gamma, r.k,
                  r.total_abs_deviation);
    os << buf.data();
}

struct ParameterProfile
{
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double k = 0.0;
};

struct ValidityReport
{
    double threshold = 0.0;
    std::size_t total = 0;
    std::size_t below = 0;
    double fraction_valid = 0.0;
    std::size_t k_below_one = 0;
    std::size_t k_below_one_valid = 0;
    double fraction_valid_k_below_one = 0.0;
    std::vector<DeviationRecord> offenders; ///< above threshold, worst first
    ParameterProfile offender_mean;         ///< parameter means over offenders
    ParameterProfile overall_mean;          ///< parameter means over all records
    std::string summary;
};

/// Splits records at `threshold` and profiles the ones above it.
[[nodiscard]] inline ValidityReport classify_validity(const std::vector<DeviationRecord>& records, double threshold,
                                                      std::size_t max_offenders_listed = 50)
{
    if (records.empty()) {
        throw ValidationError("records", "no records to classify");
    }
    ValidityReport rep;
    rep.threshold = threshold;
    rep.total = records.size();

    auto accumulate = [](ParameterProfile& p, const DeviationRecord& r) {
        p.alpha += r.alpha;
        p.beta += r.beta;
        p.gamma += r.gamma;
        p.k += r.k;
    };
    auto scale = [](ParameterProfile& p, std::size_t n) {
        if (n == 0) {
            return;
        }
        const double inv = 1.0 / static_cast<double>(n);
        p.alpha *= inv;
        p.beta *= inv;
        p.gamma *= inv;
        p.k *= inv;
    };

    std::vector<std::size_t> above;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        accumulate(rep.overall_mean, r);
        const bool ok = r.total_abs_deviation < threshold;
        if (ok) {
            ++rep.below;
        } else {
            above.push_back(i);
            accumulate(rep.offender_mean, r);
        }
        if (r.k < 1.0) {
            ++rep.k_below_one;
            if (ok) {
                ++rep.k_below_one_valid;
            }
        }
    }
    scale(rep.overall_mean, records.size());
    scale(rep.offender_mean, above.size());

    rep.fraction_valid = static_cast<double>(rep.below) / static_cast<double>(rep.total);
    rep.fraction_valid_k_below_one = rep.k_below_one == 0 ? 1.0
                                                          : static_cast<double>(rep.k_below_one_valid) /
                                                                static_cast<double>(rep.k_below_one);

    std::stable_sort(above.begin(), above.end(), [&](std::size_t a, std::size_t b) {
        return records[a].total_abs_deviation > records[b].total_abs_deviation;
    });
    for (std::size_t i = 0; i < above.size() && i < max_offenders_listed; ++i) {
        rep.offenders.push_back(records[above[i]]);
    }

    if (above.empty()) {
        rep.summary = "100% valid";
    } else {
        std::array<char, 64> buf{};
        std::snprintf(buf.data(), buf.size(), "%.2f%% valid", 100.0 * rep.fraction_valid);
        rep.summary = buf.data();
    }
    return rep;
}

} // namespace scvlab
