// scvlab/service.hpp
#pragma once

#include "scvlab/calibration.hpp"
#include "scvlab/errors.hpp"
#include "scvlab/json_io.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <utility>

namespace scvlab {

struct Scenario
{
    std::string id;
    std::string label;
    ParamsBundle params;
    std::string created_at; ///< ISO-8601 UTC
};

[[nodiscard]] inline json to_json(const Scenario& s)
{
    return json{{"id", s.id}, {"label", s.label}, {"params", to_json(s.params)}, {"created_at", s.created_at}};
}

[[nodiscard]] inline bool valid_scenario_id(const std::string& id)
{
    if (id.empty() || id.size() > 128) {
        return false;
    }
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        if (!ok) {
            return false;
        }
    }
    return true;
}

[[nodiscard]] inline std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/**
 * id -> Scenario map persisted as one JSON file. Readers share the lock;
 * writers are exclusive and the file is replaced by rename before put() returns.
 * An empty path keeps the registry in memory only.
 */
class ScenarioRegistry
{
public:
    ScenarioRegistry() = default;

    explicit ScenarioRegistry(std::filesystem::path path)
        : m_path(std::move(path))
    {
        if (!m_path.empty() && std::filesystem::exists(m_path)) {
            load();
        }
    }

    [[nodiscard]] std::optional<Scenario> get(const std::string& id) const
    {
        std::shared_lock lock(m_mutex);
        const auto it = m_items.find(id);
        if (it == m_items.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    [[nodiscard]] std::map<std::string, Scenario> list() const
    {
        std::shared_lock lock(m_mutex);
        return m_items;
    }

    /// Inserts or replaces; keeps the original created_at on replacement. Returns the stored scenario.
    Scenario put(Scenario s)
    {
        if (!valid_scenario_id(s.id)) {
            throw ValidationError("id", "scenario ids use [A-Za-z0-9_.-], 1-128 chars");
        }
        std::unique_lock lock(m_mutex);
        const auto it = m_items.find(s.id);
        if (it != m_items.end()) {
            s.created_at = it->second.created_at;
        } else if (s.created_at.empty()) {
            s.created_at = utc_timestamp();
        }
        auto next = m_items;
        next[s.id] = s;
        persist(next);
        m_items = std::move(next);
        return s;
    }

    [[nodiscard]] json to_json() const
    {
        std::shared_lock lock(m_mutex);
        return document(m_items);
    }

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return m_path; }

private:
    static json document(const std::map<std::string, Scenario>& items)
    {
        json arr = json::array();
        for (const auto& [id, s] : items) {
            arr.push_back(scvlab::to_json(s));
        }
        return json{{"scenarios", arr}};
    }

    void load()
    {
        std::ifstream in(m_path);
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError("registry", std::string("unreadable registry file: ") + e.what());
        }
        if (!doc.is_object() || !doc.contains("scenarios") || !doc["scenarios"].is_array()) {
            throw ValidationError("registry", "expected {\"scenarios\": [...]}");
        }
        for (const auto& item : doc["scenarios"]) {
            Scenario s;
            s.id = item.at("id").get<std::string>();
            s.label = item.value("label", "");
            s.params = params_from_json(item.at("params"));
            s.created_at = item.value("created_at", "");
            m_items[s.id] = std::move(s);
        }
    }

    void persist(const std::map<std::string, Scenario>& items) const
    {
        if (m_path.empty()) {
            return;
        }
        auto tmp = m_path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << document(items).dump(2) << '\n';
            out.flush();
            if (!out) {
                throw std::runtime_error("cannot write registry " + tmp.string());
            }
        }
        std::filesystem::rename(tmp, m_path);
    }

    std::filesystem::path m_path;
    mutable std::shared_mutex m_mutex;
    std::map<std::string, Scenario> m_items;
};

struct ApiResponse
{
    int status = 200;
    json body;
};

[[nodiscard]] inline ApiResponse error_response(int status, const std::string& message,
                                                std::optional<std::string> field = std::nullopt)
{
    json body{{"error", message}};
    if (field) {
        body["field"] = *field;
    }
    return ApiResponse{status, body};
}

/**
 * Request handlers, independent of the transport. Each takes the parsed body
 * and returns status + JSON; the HTTP layer only adapts.
 */
class ScenarioApi
{
public:
    explicit ScenarioApi(ScenarioRegistry& registry)
        : m_registry(registry)
    {
    }

    ApiResponse scv(const json& body) const
    {
        return guarded([&] {
            detail::reject_unknown(body, {"scenario", "params", "churn", "costs", "model", "horizon"}, "");
            const auto params = resolve(body);
            const auto model = parse_model_kind(body.value("model", std::string("exp-closed")));
            const auto horizon = horizon_from_json(body);
            return ApiResponse{200, scv_document(params, model, horizon)};
        });
    }

    ApiResponse sensitivity(const json& body) const
    {
        return guarded([&] {
            detail::reject_unknown(body, {"scenario", "params", "churn", "costs", "verify", "step"}, "");
            const auto params = resolve(body);
            const bool verify = body.value("verify", false);
            const double step = body.contains("step") ? read_number(body["step"], "step") : 1e-6;
            return ApiResponse{200, sensitivity_document(params, verify, step)};
        });
    }

    ApiResponse whatif(const json& body) const
    {
        return guarded([&] {
            detail::reject_unknown(body, {"scenario", "params", "churn", "costs", "tau_from", "tau_to", "share_delta"},
                                   "");
            const auto params = resolve(body);
            FactorShift shift;
            shift.tau_from = read_number(detail::require(body, "tau_from", ""), "tau_from");
            shift.tau_to = read_number(detail::require(body, "tau_to", ""), "tau_to");
            shift.share_delta = body.contains("share_delta") ? read_number(body["share_delta"], "share_delta") : 1.0;
            return ApiResponse{200, whatif_document(params, shift)};
        });
    }

    /// Body is the CSV text itself; calibrate_json handles {"csv": "..."}.
    ApiResponse calibrate_csv(const std::string& csv) const
    {
        return guarded([&] {
            std::istringstream in(csv);
            const auto table = parse_cohort_csv(in);
            return ApiResponse{200, to_json(calibrate(table))};
        });
    }

    ApiResponse calibrate_json(const json& body) const
    {
        if (!body.is_object() || !body.contains("csv") || !body["csv"].is_string()) {
            return error_response(400, "expected {\"csv\": \"...\"}", "csv");
        }
        return calibrate_csv(body["csv"].get<std::string>());
    }

    ApiResponse get_scenario(const std::string& id) const
    {
        const auto s = m_registry.get(id);
        if (!s) {
            return error_response(404, "no scenario '" + id + "'", "id");
        }
        return ApiResponse{200, to_json(*s)};
    }

    ApiResponse put_scenario(const std::string& id, const json& body)
    {
        return guarded([&] {
            detail::reject_unknown(body, {"label", "params", "id", "created_at"}, "");
            if (body.contains("id") && body["id"] != id) {
                throw ValidationError("id", "body id does not match the path");
            }
            Scenario s;
            s.id = id;
            s.label = body.value("label", "");
            s.params = params_from_json(detail::require(body, "params", ""));
            return ApiResponse{200, to_json(m_registry.put(std::move(s)))};
        });
    }

    ApiResponse list_scenarios() const { return ApiResponse{200, m_registry.to_json()}; }

    static ApiResponse health() { return ApiResponse{200, json{{"status", "ok"}}}; }

private:
    template <typename F>
    static ApiResponse guarded(F&& f)
    {
        try {
            return f();
        } catch (const ValidationError& e) {
            return error_response(400, e.what(), e.field());
        } catch (const NoSolutionError& e) {
            return error_response(422, e.what());
        } catch (const ConvergenceError& e) {
            return error_response(422, e.what());
        } catch (const json::exception& e) {
            return error_response(400, e.what(), "body");
        }
    }

    static TruncationPolicy horizon_from_json(const json& body)
    {
        if (!body.contains("horizon")) {
            return TruncationPolicy::adaptive();
        }
        const auto& h = body["horizon"];
        if (h.is_string()) {
            return horizon_from_text(h.get<std::string>());
        }
        if (h.is_number_integer() && h.get<long long>() > 0) {
            return TruncationPolicy::fixed(h.get<std::size_t>());
        }
        throw ValidationError("horizon", "must be 'auto' or a positive integer");
    }

    /// Params come from a stored scenario, a "params" object, or top-level churn/costs.
    ParamsBundle resolve(const json& body) const
    {
        const int sources = static_cast<int>(body.contains("scenario")) + static_cast<int>(body.contains("params")) +
                            static_cast<int>(body.contains("churn") || body.contains("costs"));
        if (sources != 1) {
            throw ValidationError("params", "give exactly one of 'scenario', 'params', or top-level churn/costs");
        }
        if (body.contains("scenario")) {
            const auto id = body["scenario"].get<std::string>();
            const auto s = m_registry.get(id);
            if (!s) {
                throw ValidationError("scenario", "no scenario '" + id + "'");
            }
            return s->params;
        }
        if (body.contains("params")) {
            return params_from_json(body["params"]);
        }
        return ParamsBundle{churn_from_json(detail::require(body, "churn", "")),
                            costs_from_json(detail::require(body, "costs", ""))};
    }

    ScenarioRegistry& m_registry;
};

/// Wires ScenarioApi onto an httplib server; serves `static_dir` at "/" when given.
inline void install_routes(httplib::Server& server, ScenarioApi& api, const std::string& static_dir = {})
{
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(render(r.body), "application/json");
    };
    auto with_json = [reply](auto handler) {
        return [reply, handler](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = req.body.empty() ? json::object() : json::parse(req.body);
            } catch (const json::exception& e) {
                reply(res, error_response(400, std::string("malformed JSON: ") + e.what(), "body"));
                return;
            }
            if (!body.is_object()) {
                reply(res, error_response(400, "request body must be a JSON object", "body"));
                return;
            }
            reply(res, handler(body, req));
        };
    };

    server.Get("/api/health", [reply](const httplib::Request&, httplib::Response& res) {
        reply(res, ScenarioApi::health());
    });
    server.Post("/api/scv", with_json([&api](const json& b, const httplib::Request&) { return api.scv(b); }));
    server.Post("/api/sensitivity",
                with_json([&api](const json& b, const httplib::Request&) { return api.sensitivity(b); }));
    server.Post("/api/whatif", with_json([&api](const json& b, const httplib::Request&) { return api.whatif(b); }));
    server.Post("/api/calibrate", [&api, reply](const httplib::Request& req, httplib::Response& res) {
        if (req.has_file("cohorts")) {
            reply(res, api.calibrate_csv(req.get_file_value("cohorts").content));
            return;
        }
        const auto type = req.get_header_value("Content-Type");
        if (type.rfind("text/csv", 0) == 0) {
            reply(res, api.calibrate_csv(req.body));
            return;
        }
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            reply(res, error_response(400, std::string("malformed JSON: ") + e.what(), "body"));
            return;
        }
        reply(res, api.calibrate_json(body));
    });
    server.Get("/api/scenarios", [&api, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, api.list_scenarios());
    });
    server.Get(R"(/api/scenarios/([A-Za-z0-9_.\-]+))", [&api, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, api.get_scenario(req.matches[1]));
    });
    server.Put(R"(/api/scenarios/([A-Za-z0-9_.\-]+))",
               with_json([&api](const json& b, const httplib::Request& req) {
                   return api.put_scenario(req.matches[1], b);
               }));

    if (!static_dir.empty()) {
        server.set_mount_point("/", static_dir);
    }
}

} // namespace scvlab
