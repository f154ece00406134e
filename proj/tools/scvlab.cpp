// scvlab command-line entry point.
//
// JSON results go to stdout, diagnostics to stderr. Exit codes: 0 ok,
// 2 invalid input, 3 a solver or series failed to converge.

#include "scvlab/json_io.hpp"
#include "scvlab/scvlab.hpp"
#include "scvlab/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using scvlab::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitConvergence = 3;

json read_json_file(const std::string& path, const std::string& option)
{
    std::ifstream in(path);
    if (!in) {
        throw scvlab::ValidationError(option, "cannot open '" + path + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw scvlab::ValidationError(option, "malformed JSON in '" + path + "': " + e.what());
    }
}

scvlab::ParamsBundle read_params(const std::string& path)
{
    return scvlab::params_from_json(read_json_file(path, "--params"));
}

void write_text_file(const std::string& path, const std::string& text, const std::string& option)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw scvlab::ValidationError(option, "cannot write '" + path + "'");
    }
    out << text;
}

httplib::Server* g_server = nullptr;

extern "C" void stop_server(int)
{
    if (g_server != nullptr) {
        g_server->stop();
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"scvlab: single customer value for subscription businesses"};
    app.require_subcommand(1);

    // compute
    auto* compute = app.add_subcommand("compute", "Evaluate SCV for a params file");
    std::string compute_params;
    std::string model = "exp-closed";
    std::string horizon = "auto";
    compute->add_option("--params", compute_params, "Params JSON file")->required();
    compute->add_option("--model", model, "exp-closed | const-closed | exact-series | approx-series");
    compute->add_option("--horizon", horizon, "Series horizon: 'auto' or a period count");

    // validate-approx
    auto* validate = app.add_subcommand("validate-approx", "Sweep the approximation error over a parameter grid");
    std::string grid_path = "default";
    std::string records_out;
    std::optional<double> threshold;
    unsigned threads = 0;
    validate->add_option("--grid", grid_path, "Grid JSON file, or 'default'");
    validate->add_option("--out", records_out, "Write per-point records as CSV");
    validate->add_option("--threshold", threshold, "Add a validity report at this deviation threshold");
    validate->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

    // sensitivity
    auto* sens = app.add_subcommand("sensitivity", "Closed-form partial derivatives of SCV");
    std::string sens_params;
    bool verify = false;
    double step = 1e-6;
    sens->add_option("--params", sens_params, "Params JSON file")->required();
    sens->add_flag("--verify", verify, "Also compute central finite differences");
    sens->add_option("--step", step, "Relative finite-difference step");

    // calibrate
    auto* calib = app.add_subcommand("calibrate", "Fit churn parameters to cohort retention data");
    std::string cohorts_path;
    std::string calib_out;
    std::string costs_from;
    calib->add_option("--cohorts", cohorts_path, "Cohort CSV (cohort_id,period,active_fraction[,cohort_size])")
        ->required();
    calib->add_option("--out", calib_out, "Write the fitted params document here");
    calib->add_option("--costs-from", costs_from, "Params file whose costs block is copied into --out");

    // synthesize
    auto* synth = app.add_subcommand("synthesize", "Write synthetic cohort CSV from known parameters");
    std::string synth_params;
    int synth_periods = 24;
    int synth_cohorts = 1;
    double synth_noise = 0.0;
    std::uint64_t synth_seed = 1;
    std::string synth_out;
    synth->add_option("--params", synth_params, "Params JSON file")->required();
    synth->add_option("--periods", synth_periods, "Hazard periods per cohort");
    synth->add_option("--cohorts", synth_cohorts, "Number of cohorts");
    synth->add_option("--noise", synth_noise, "Relative standard deviation of multiplicative hazard noise");
    synth->add_option("--seed", synth_seed, "Noise seed");
    synth->add_option("--out", synth_out, "Write the CSV here instead of stdout");

    // whatif
    auto* whatif = app.add_subcommand("whatif", "Delta SCV for a shift in mean time to churn");
    std::string whatif_params;
    std::optional<double> tau_from;
    std::optional<double> tau_to;
    std::optional<double> cr_from;
    std::optional<double> cr_to;
    double share = 1.0;
    whatif->add_option("--params", whatif_params, "Params JSON file")->required();
    auto* tf = whatif->add_option("--tau-from", tau_from, "Mean time to churn before the shift");
    auto* tt = whatif->add_option("--tau-to", tau_to, "Mean time to churn after the shift");
    auto* cf = whatif->add_option("--cr-from", cr_from, "CR_init before the shift (instead of --tau-from)");
    auto* ct = whatif->add_option("--cr-to", cr_to, "CR_init after the shift (instead of --tau-to)");
    tf->needs(tt);
    tt->needs(tf);
    cf->needs(ct);
    ct->needs(cf);
    tf->excludes(cf);
    whatif->add_option("--share", share, "Fraction of customers moved, in (0, 1]");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP scenario service");
    std::optional<int> port;
    std::string host = "127.0.0.1";
    std::string static_dir;
    std::string registry_path;
    serve->add_option("--port", port, "Listen port (default: $SCVLAB_PORT or 8080)");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--static", static_dir, "Directory served at /");
    serve->add_option("--registry", registry_path, "Scenario registry JSON file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*compute) {
            const auto params = read_params(compute_params);
            const auto doc = scvlab::scv_document(params, scvlab::parse_model_kind(model),
                                                  scvlab::horizon_from_text(horizon));
            if (!doc["result"]["recommended_region"].get<bool>()) {
                std::cerr << "warning: parameters lie outside the region where the approximation was validated\n";
            }
            std::cout << scvlab::render(doc);
        } else if (*validate) {
            scvlab::SweepGrid grid;
            if (grid_path != "default") {
                grid = scvlab::grid_from_json(read_json_file(grid_path, "--grid"));
            }
            grid.validate();

            std::ofstream csv;
            if (!records_out.empty()) {
                csv.open(records_out, std::ios::trunc);
                if (!csv) {
                    throw scvlab::ValidationError("--out", "cannot write '" + records_out + "'");
                }
                scvlab::write_csv_header(csv);
            }
            std::vector<scvlab::DeviationRecord> kept;
            const auto stats = scvlab::sweep(
                grid,
                [&](const scvlab::DeviationRecord& r) {
                    if (csv.is_open()) {
                        scvlab::write_csv_row(csv, r);
                    }
                    if (threshold) {
                        kept.push_back(r);
                    }
                },
                threads);
            json out = scvlab::to_json(stats);
            if (threshold) {
                out["validity"] = scvlab::to_json(scvlab::classify_validity(kept, *threshold));
            }
            std::cout << scvlab::render(out);
        } else if (*sens) {
            const auto params = read_params(sens_params);
            std::cout << scvlab::render(scvlab::sensitivity_document(params, verify, step));
        } else if (*calib) {
            std::ifstream in(cohorts_path);
            if (!in) {
                throw scvlab::ValidationError("--cohorts", "cannot open '" + cohorts_path + "'");
            }
            const auto fit = scvlab::calibrate(scvlab::parse_cohort_csv(in));
            for (const auto& d : fit.diagnostics) {
                std::cerr << "note: " << d << '\n';
            }
            const json result = scvlab::to_json(fit);
            if (!calib_out.empty()) {
                json params{{"churn", result["churn"]}};
                if (!costs_from.empty()) {
                    params["costs"] = scvlab::to_json(read_params(costs_from).costs);
                }
                write_text_file(calib_out, scvlab::render(params), "--out");
            }
            std::cout << scvlab::render(result);
        } else if (*synth) {
            const auto params = read_params(synth_params);
            std::ostringstream csv;
            scvlab::write_synthetic_cohorts(csv, params.churn, synth_periods, synth_cohorts, synth_noise, synth_seed);
            if (synth_out.empty()) {
                std::cout << csv.str();
            } else {
                write_text_file(synth_out, csv.str(), "--out");
            }
        } else if (*whatif) {
            const auto params = read_params(whatif_params);
            json doc;
            if (tau_from) {
                doc = scvlab::whatif_document(params, scvlab::FactorShift{*tau_from, *tau_to, share});
            } else if (cr_from) {
                const auto w = scvlab::cr_init_shift_delta(params.churn, params.costs, *cr_from, *cr_to, share);
                doc = json{{"params", scvlab::to_json(params)}, {"result", scvlab::to_json(w)}};
            } else {
                throw scvlab::ValidationError("--tau-from", "give --tau-from/--tau-to or --cr-from/--cr-to");
            }
            std::cout << scvlab::render(doc);
        } else if (*serve) {
            int listen_port = 8080;
            if (port) {
                listen_port = *port;
            } else if (const char* env = std::getenv("SCVLAB_PORT")) {
                listen_port = std::atoi(env);
            }
            if (listen_port <= 0 || listen_port > 65535) {
                throw scvlab::ValidationError("--port", "must be in 1..65535");
            }
            scvlab::ScenarioRegistry registry(registry_path);
            scvlab::ScenarioApi api(registry);
            httplib::Server server;
            // Plain SO_REUSEADDR: unlike the library default SO_REUSEPORT, a port already
            // in use makes the bind fail instead of silently sharing it.
            server.set_socket_options([](socket_t sock) {
                int yes = 1;
                ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
            });
            if (!static_dir.empty() && !std::filesystem::is_directory(static_dir)) {
                throw scvlab::ValidationError("--static", "not a directory: '" + static_dir + "'");
            }
            scvlab::install_routes(server, api, static_dir);
            if (!server.bind_to_port(host, listen_port)) {
                std::cerr << "error: cannot bind " << host << ":" << listen_port << '\n';
                return kExitValidation;
            }
            g_server = &server;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            std::cerr << "listening on http://" << host << ":" << listen_port << '\n';
            server.listen_after_bind();
            g_server = nullptr;
        }
    } catch (const scvlab::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const scvlab::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConvergence;
    } catch (const scvlab::NoSolutionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConvergence;
    }
    return kExitOk;
}
