// scvlab/json_io.hpp
//
// JSON encoding shared by the CLI and the HTTP service, so both emit identical
// bytes for identical inputs. Money values are written as decimal strings
// (shortest round-trip form) and accepted as strings or numbers.
#pragma once

#include "scvlab/approx_validator.hpp"
#include "scvlab/calibration.hpp"
#include "scvlab/errors.hpp"
#include "scvlab/params.hpp"
#include "scvlab/scv.hpp"
#include "scvlab/sensitivity.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <initializer_list>
#include <string>
#include <string_view>
#include <system_error>

namespace scvlab {

using json = nlohmann::json;

[[nodiscard]] inline std::string money_string(double value)
{
    if (!std::isfinite(value)) {
        throw ValidationError("money", "non-finite amount");
    }
    if (value == 0.0) {
        value = 0.0; // drop negative zero
    }
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), ptr);
}

namespace detail {

inline double parse_decimal(std::string_view text, const std::string& field)
{
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && text.front() == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (text.empty() || ec != std::errc{} || ptr != last || !std::isfinite(value)) {
        throw ValidationError(field, "not a decimal number: '" + std::string(text) + "'");
    }
    return value;
}

inline const json& require(const json& obj, const char* key, const std::string& path)
{
    const auto it = obj.find(key);
    if (it == obj.end()) {
        throw ValidationError(path.empty() ? std::string(key) : path + "." + key, "missing");
    }
    return *it;
}

inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& path)
{
    if (!obj.is_object()) {
        throw ValidationError(path, "must be an object");
    }
    for (const auto& [key, _] : obj.items()) {
        bool known = false;
        for (auto a : allowed) {
            known = known || key == a;
        }
        if (!known) {
            throw ValidationError(path.empty() ? key : path + "." + key, "unknown key");
        }
    }
}

} // namespace detail

[[nodiscard]] inline double read_number(const json& value, const std::string& field)
{
    if (!value.is_number()) {
        throw ValidationError(field, "must be a number");
    }
    const double v = value.get<double>();
    if (!std::isfinite(v)) {
        throw ValidationError(field, "must be finite");
    }
    return v;
}

/// Money accepts a JSON number or a decimal string.
[[nodiscard]] inline double read_money(const json& value, const std::string& field)
{
    if (value.is_string()) {
        return detail::parse_decimal(value.get_ref<const std::string&>(), field);
    }
    return read_number(value, field);
}

struct ParamsBundle
{
    ChurnParams churn;
    CostParams costs;
};

[[nodiscard]] inline ChurnParams churn_from_json(const json& j, const std::string& path = "churn")
{
    detail::reject_unknown(j, {"cr_init", "cr_nat", "k", "p_trial_churn"}, path);
    ChurnParams c;
    c.cr_init = read_number(detail::require(j, "cr_init", path), path + ".cr_init");
    c.cr_nat = read_number(detail::require(j, "cr_nat", path), path + ".cr_nat");
    c.k = read_number(detail::require(j, "k", path), path + ".k");
    c.p_trial_churn = read_number(detail::require(j, "p_trial_churn", path), path + ".p_trial_churn");
    c.validate(path);
    return c;
}

[[nodiscard]] inline CostParams costs_from_json(const json& j, const std::string& path = "costs")
{
    detail::reject_unknown(j, {"channels", "cc", "r_pt"}, path);
    CostParams c;
    const auto& channels = detail::require(j, "channels", path);
    if (!channels.is_array()) {
        throw ValidationError(path + ".channels", "must be an array");
    }
    for (std::size_t i = 0; i < channels.size(); ++i) {
        const std::string at = path + ".channels[" + std::to_string(i) + "]";
        detail::reject_unknown(channels[i], {"share", "cac"}, at);
        c.channels.push_back(AcquisitionChannel{read_number(detail::require(channels[i], "share", at), at + ".share"),
                                                read_money(detail::require(channels[i], "cac", at), at + ".cac")});
    }
    c.cc = read_money(detail::require(j, "cc", path), path + ".cc");
    c.r_pt = read_money(detail::require(j, "r_pt", path), path + ".r_pt");
    c.validate(path);
    return c;
}

/// Parses a params document: {"churn": {...}, "costs": {...}}. Unknown keys are rejected.
[[nodiscard]] inline ParamsBundle params_from_json(const json& j)
{
    detail::reject_unknown(j, {"churn", "costs"}, "");
    return ParamsBundle{churn_from_json(detail::require(j, "churn", "")), costs_from_json(detail::require(j, "costs", ""))};
}

[[nodiscard]] inline json to_json(const ChurnParams& c)
{
    return json{{"cr_init", c.cr_init}, {"cr_nat", c.cr_nat}, {"k", c.k}, {"p_trial_churn", c.p_trial_churn}};
}

[[nodiscard]] inline json to_json(const CostParams& c)
{
    json channels = json::array();
    for (const auto& ch : c.channels) {
        channels.push_back(json{{"share", ch.share}, {"cac", money_string(ch.cac)}});
    }
    return json{{"channels", channels}, {"cc", money_string(c.cc)}, {"r_pt", money_string(c.r_pt)}};
}

[[nodiscard]] inline json to_json(const ParamsBundle& p)
{
    return json{{"churn", to_json(p.churn)}, {"costs", to_json(p.costs)}};
}

[[nodiscard]] inline json to_json(const ScvBreakdown& b)
{
    json j{
        {"scv", money_string(b.scv)},
        {"acquisition_term", money_string(b.acquisition_term)},
        {"retention_term", money_string(b.retention_term)},
        {"tau_mean", b.tau_mean},
        {"normalization", b.normalization},
        {"model_kind", to_string(b.model_kind)},
        {"recommended_region", b.recommended_region},
    };
    if (b.horizon > 0) {
        j["horizon"] = b.horizon;
    }
    return j;
}

[[nodiscard]] inline json to_json(const SensitivityReport& r)
{
    json partials = json::object();
    for (const auto& e : r.entries) {
        json entry{{"analytic", e.analytic}};
        if (e.numeric) {
            entry["numeric"] = *e.numeric;
        }
        if (e.relative_error) {
            entry["relative_error"] = *e.relative_error;
        }
        if (e.absolute_error) {
            entry["absolute_error"] = *e.absolute_error;
        }
        partials[std::string(parameter_name(e.parameter))] = entry;
    }
    json j{
        {"partials", partials},
        {"label", "analytic (closed-form partial derivatives)"},
        {"gamma_note", "the 'gamma' entry is d SCV / d p_trial_churn (trial-path sensitivity)"},
    };
    if (r.step) {
        j["step"] = *r.step;
    }
    return j;
}

[[nodiscard]] inline json to_json(const WhatIfResult& w)
{
    json j{
        {"delta_scv", money_string(w.delta_scv)},
        {"endpoints",
         {{"from", {{"cr_init", w.cr_init_from}, {"partial_cr_init", w.partial_from}}},
          {"to", {{"cr_init", w.cr_init_to}, {"partial_cr_init", w.partial_to}}}}},
        {"mean_partial_cr_init", w.mean_partial},
        {"delta_cr_init", w.delta_cr_init},
        {"share_delta", w.share_delta},
        {"caveat", std::string(kWhatIfCaveat)},
    };
    if (w.tau_from) {
        j["endpoints"]["from"]["tau_mean"] = *w.tau_from;
    }
    if (w.tau_to) {
        j["endpoints"]["to"]["tau_mean"] = *w.tau_to;
    }
    return j;
}

[[nodiscard]] inline json to_json(const DeviationStats& s)
{
    return json{{"average", s.average},         {"min", s.min},
                {"max", s.max},                 {"stdev", s.stdev},
                {"grid_points", s.grid_points}, {"max_period_deviation", s.max_period_deviation}};
}

[[nodiscard]] inline json to_json(const DeviationRecord& r)
{
    return json{{"alpha", r.alpha}, {"beta", r.beta}, {"gamma", r.gamma}, {"k", r.k},
                {"total_abs_deviation", r.total_abs_deviation}};
}

[[nodiscard]] inline json to_json(const ParameterProfile& p)
{
    return json{{"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}, {"k", p.k}};
}

[[nodiscard]] inline json to_json(const ValidityReport& v)
{
    json offenders = json::array();
    for (const auto& r : v.offenders) {
        offenders.push_back(to_json(r));
    }
    return json{{"threshold", v.threshold},
                {"total", v.total},
                {"below_threshold", v.below},
                {"fraction_valid", v.fraction_valid},
                {"fraction_valid_k_below_one", v.fraction_valid_k_below_one},
                {"summary", v.summary},
                {"offenders", offenders},
                {"offender_mean", to_json(v.offender_mean)},
                {"overall_mean", to_json(v.overall_mean)}};
}

[[nodiscard]] inline json to_json(const FitResult& f)
{
    json fitted = json::array();
    for (std::size_t i = 0; i < f.fitted.size(); ++i) {
        fitted.push_back(json{{"observed", f.observed[i]}, {"fitted", f.fitted[i]}});
    }
    return json{{"churn", to_json(f.churn)},
                {"fit",
                 {{"rss", f.rss},
                  {"iterations", f.iterations},
                  {"converged", f.converged},
                  {"constant_model", f.constant_model},
                  {"clamped", f.clamped},
                  {"recommended_region", f.recommended_region},
                  {"hazards", fitted},
                  {"diagnostics", f.diagnostics}}}};
}

[[nodiscard]] inline SweepAxis axis_from_json(const json& j, const std::string& path)
{
    detail::reject_unknown(j, {"lo", "hi", "count", "scale"}, path);
    SweepAxis a;
    a.lo = read_number(detail::require(j, "lo", path), path + ".lo");
    a.hi = read_number(detail::require(j, "hi", path), path + ".hi");
    const auto& count = detail::require(j, "count", path);
    if (!count.is_number_integer() || count.get<long long>() < 0) {
        throw ValidationError(path + ".count", "must be a non-negative integer");
    }
    a.count = count.get<std::size_t>();
    if (j.contains("scale")) {
        const auto& scale = j["scale"];
        if (scale == "linear") {
            a.scale = AxisScale::Linear;
        } else if (scale == "log") {
            a.scale = AxisScale::Log;
        } else {
            throw ValidationError(path + ".scale", "must be 'linear' or 'log'");
        }
    }
    return a;
}

/**
 * Grid document. Either axes ({"alpha", "beta_fraction", "gamma", "k"}, each
 * {lo, hi, count, scale}; missing axes keep their defaults) or an explicit list
 * {"points": [{"alpha", "beta", "gamma", "k"}, ...]}.
 */
[[nodiscard]] inline SweepGrid grid_from_json(const json& j)
{
    detail::reject_unknown(j, {"alpha", "beta_fraction", "gamma", "k", "points"}, "grid");
    SweepGrid g;
    if (j.contains("points")) {
        const auto& pts = j["points"];
        if (!pts.is_array() || pts.empty()) {
            throw ValidationError("grid.points", "grid is empty");
        }
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const std::string at = "grid.points[" + std::to_string(i) + "]";
            detail::reject_unknown(pts[i], {"alpha", "beta", "gamma", "k"}, at);
            g.explicit_points.push_back(GridPoint{read_number(detail::require(pts[i], "alpha", at), at + ".alpha"),
                                                  read_number(detail::require(pts[i], "beta", at), at + ".beta"),
                                                  read_number(detail::require(pts[i], "gamma", at), at + ".gamma"),
                                                  read_number(detail::require(pts[i], "k", at), at + ".k")});
        }
    }
    if (j.contains("alpha")) {
        g.alpha = axis_from_json(j["alpha"], "grid.alpha");
    }
    if (j.contains("beta_fraction")) {
        g.beta_fraction = axis_from_json(j["beta_fraction"], "grid.beta_fraction");
    }
    if (j.contains("gamma")) {
        g.gamma = axis_from_json(j["gamma"], "grid.gamma");
    }
    if (j.contains("k")) {
        g.k = axis_from_json(j["k"], "grid.k");
    }
    g.validate();
    return g;
}

/// "auto" or a positive integer.
[[nodiscard]] inline TruncationPolicy horizon_from_text(const std::string& text)
{
    if (text.empty() || text == "auto") {
        return TruncationPolicy::adaptive();
    }
    std::size_t n = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec != std::errc{} || ptr != text.data() + text.size() || n == 0) {
        throw ValidationError("horizon", "must be 'auto' or a positive integer");
    }
    return TruncationPolicy::fixed(n);
}

[[nodiscard]] inline json horizon_to_json(const TruncationPolicy& p)
{
    if (p.mode == TruncationPolicy::Mode::Adaptive) {
        return "auto";
    }
    return p.fixed_horizon;
}

// Whole-response documents. The CLI prints these; the service returns them.

[[nodiscard]] inline json scv_document(const ParamsBundle& params, ModelKind model, const TruncationPolicy& horizon)
{
    const auto result = evaluate_scv(params.churn, params.costs, model, horizon);
    json j{{"model", to_string(model)}, {"params", to_json(params)}, {"result", to_json(result)}};
    if (model == ModelKind::ExactSeries || model == ModelKind::ApproxSeries) {
        j["horizon"] = horizon_to_json(horizon);
    }
    return j;
}

[[nodiscard]] inline json sensitivity_document(const ParamsBundle& params, bool verify, double step)
{
    const auto report = verify ? numeric_gradient(params.churn, params.costs, step)
                               : analytic_gradient(params.churn, params.costs);
    return json{{"params", to_json(params)}, {"result", to_json(report)}};
}

[[nodiscard]] inline json whatif_document(const ParamsBundle& params, const FactorShift& shift)
{
    const auto w = feature_shift_delta(params.churn, params.costs, shift);
    return json{{"params", to_json(params)}, {"result", to_json(w)}};
}

[[nodiscard]] inline std::string render(const json& j)
{
    return j.dump(2) + "\n";
}

} // namespace scvlab
