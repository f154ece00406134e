#include "catch_amalgamated.hpp"

#include "scvlab/json_io.hpp"
#include "support.hpp"

using namespace scvlab;
using namespace scvlab::testing;
using Catch::Matchers::WithinAbs;

namespace {

json case_study_json()
{
    return json::parse(slurp(case_study_path()));
}

std::string field_of(const json& j)
{
    try {
        (void)params_from_json(j);
    } catch (const ValidationError& e) {
        return e.field();
    }
    return "<no error>";
}

} // namespace

TEST_CASE("case-study file parses", "[json]")
{
    const auto p = params_from_json(case_study_json());
    CHECK(p.churn.cr_init == 0.30);
    CHECK(p.churn.cr_nat == 0.05);
    CHECK(p.churn.k == 0.6);
    CHECK(p.churn.p_trial_churn == 0.36);
    REQUIRE(p.costs.channels.size() == 1);
    CHECK(p.costs.channels[0].cac == -35.0);
    CHECK(p.costs.cc == 0.0);
    CHECK(p.costs.r_pt == 6.0);
}

TEST_CASE("params round-trip through json", "[json]")
{
    ParamSampler s(51);
    for (int i = 0; i < 50; ++i) {
        const ParamsBundle p{s.churn(), s.costs()};
        const auto back = params_from_json(json::parse(to_json(p).dump()));
        CHECK(back.churn.cr_init == p.churn.cr_init);
        CHECK(back.churn.k == p.churn.k);
        CHECK(back.costs.channels[1].cac == p.costs.channels[1].cac);
        CHECK(back.costs.cc == p.costs.cc);
        CHECK(back.costs.r_pt == p.costs.r_pt);
    }
}

TEST_CASE("money is written as a shortest decimal string", "[json]")
{
    CHECK(money_string(-31.477449) == "-31.477449");
    CHECK(money_string(6.0) == "6");
    CHECK(money_string(-0.0) == "0");
    CHECK(money_string(0.1) == "0.1");
    CHECK_THROWS_AS(money_string(std::numeric_limits<double>::infinity()), ValidationError);
}

TEST_CASE("money accepts numbers and decimal strings", "[json]")
{
    CHECK(read_money(json("-35.50"), "x") == -35.5);
    CHECK(read_money(json("+6"), "x") == 6.0);
    CHECK(read_money(json(12.25), "x") == 12.25);
    CHECK_THROWS_AS(read_money(json("12,5"), "x"), ValidationError);
    CHECK_THROWS_AS(read_money(json("nan"), "x"), ValidationError);
    CHECK_THROWS_AS(read_money(json(true), "x"), ValidationError);
}

TEST_CASE("params documents are validated with field paths", "[json]")
{
    auto j = case_study_json();

    auto extra = j;
    extra["churn"]["cr_intt"] = 0.3;
    CHECK(field_of(extra) == "churn.cr_intt");

    auto top = j;
    top["note"] = "x";
    CHECK(field_of(top) == "note");

    auto missing = j;
    missing.erase("costs");
    CHECK(field_of(missing) == "costs");

    auto shares = j;
    shares["costs"]["channels"] = json::array({{{"share", 0.5}, {"cac", "-10"}}, {{"share", 0.4}, {"cac", "-20"}}});
    CHECK(field_of(shares) == "costs.channels");

    auto cac = j;
    cac["costs"]["channels"][0]["cac"] = "abc";
    CHECK(field_of(cac) == "costs.channels[0].cac");

    auto order = j;
    order["churn"]["cr_nat"] = 0.4;
    CHECK(field_of(order) == "churn.cr_init");

    auto kind = j;
    kind["churn"]["k"] = "0.6";
    CHECK(field_of(kind) == "churn.k");

    auto trial = j;
    trial["churn"]["p_trial_churn"] = 1.2;
    CHECK(field_of(trial) == "churn.p_trial_churn");

    CHECK(field_of(json::array()) == "");
}

TEST_CASE("scv document layout", "[json]")
{
    const auto p = params_from_json(case_study_json());
    const auto doc = scv_document(p, ModelKind::ExponentialClosed, TruncationPolicy::adaptive());
    CHECK(doc["model"] == "exp-closed");
    CHECK_FALSE(doc.contains("horizon"));
    CHECK(doc["params"] == to_json(p));
    const auto& r = doc["result"];
    CHECK(r["scv"].is_string());
    CHECK_THAT(std::stod(r["scv"].get<std::string>()), WithinAbs(-31.48, 0.01));
    CHECK_THAT(r["tau_mean"].get<double>(), WithinAbs(1.5871, 1e-4));
    CHECK(r["recommended_region"] == true);

    const auto series = scv_document(p, ModelKind::ExactSeries, TruncationPolicy::fixed(500));
    CHECK(series["horizon"] == 500);
    CHECK(series["result"]["horizon"] == 500);
}

TEST_CASE("sensitivity and what-if documents", "[json]")
{
    const auto p = params_from_json(case_study_json());
    const auto s = sensitivity_document(p, false, 1e-6);
    const auto& partials = s["result"]["partials"];
    CHECK(partials.size() == 7);
    CHECK(partials["CAC_mean"]["analytic"] == 1.0);
    CHECK_THAT(partials["CR_init"]["analytic"].get<double>(), WithinAbs(-11.14, 0.01));
    CHECK_FALSE(partials["k"].contains("numeric"));
    CHECK_FALSE(s["result"].contains("step"));

    const auto v = sensitivity_document(p, true, 1e-6);
    CHECK(v["result"]["partials"]["k"].contains("numeric"));
    CHECK(v["result"]["step"] == 1e-6);

    const auto w = whatif_document(p, FactorShift{1.5870918, 2.5767441, 1.0});
    CHECK_THAT(std::stod(w["result"]["delta_scv"].get<std::string>()), WithinAbs(9.325, 0.01));
    CHECK_THAT(w["result"]["endpoints"]["to"]["cr_init"].get<double>(), WithinAbs(0.1483, 0.0005));
    CHECK(w["result"]["caveat"].is_string());
}

TEST_CASE("grid documents", "[json]")
{
    const auto g = grid_from_json(json::parse(R"({"alpha": {"lo": 0.01, "hi": 0.5, "count": 3, "scale": "log"}})"));
    CHECK(g.alpha.count == 3);
    CHECK(g.alpha.scale == AxisScale::Log);
    CHECK(g.k.count == 10);

    const auto pts = grid_from_json(json::parse(R"({"points": [{"alpha": 0.1, "beta": 0.2, "gamma": 0.5, "k": 0.3}]})"));
    CHECK(pts.size() == 1);

    auto field = [](const char* text) {
        try {
            (void)grid_from_json(json::parse(text));
        } catch (const ValidationError& e) {
            return e.field();
        }
        return std::string("<no error>");
    };
    CHECK(field(R"({"alpha": {"lo": 0.01, "hi": 0.5, "count": 3, "scale": 2}})") == "grid.alpha.scale");
    CHECK(field(R"({"alpha": {"lo": 0.01, "hi": 0.5, "count": -1}})") == "grid.alpha.count");
    CHECK(field(R"({"k": {"lo": 0.01, "hi": 0.5, "count": 0}})") == "grid.k.count");
    CHECK(field(R"({"points": []})") == "grid.points");
    CHECK(field(R"({"delta": {}})") == "grid.delta");
}

TEST_CASE("horizon text", "[json]")
{
    CHECK(horizon_from_text("auto").mode == TruncationPolicy::Mode::Adaptive);
    CHECK(horizon_from_text("250").fixed_horizon == 250);
    CHECK_THROWS_AS(horizon_from_text("0"), ValidationError);
    CHECK_THROWS_AS(horizon_from_text("12x"), ValidationError);
    CHECK(horizon_to_json(TruncationPolicy::fixed(7)) == 7);
    CHECK(horizon_to_json(TruncationPolicy::adaptive()) == "auto");
}

TEST_CASE("render ends with a newline", "[json]")
{
    CHECK(render(json{{"a", 1}}) == "{\n  \"a\": 1\n}\n");
}
