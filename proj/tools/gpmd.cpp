// Command-line front end: run, report, mts-demo.
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpmd/csv.hpp"
#include "gpmd/errors.hpp"
#include "gpmd/harness.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GP-MD movement-penalized contextual Bayesian optimization simulator"};
    app.require_subcommand(1);

    auto* run_cmd = app.add_subcommand("run", "run a policy sweep");
    std::string config_path, kind, policies, seeds, rhos, out, dataset, update_mode, beta_mode, weighting, start_mode;
    std::size_t steps = 0, episodes = 0;
    double tau = 0.0, kappa = 0.0, v_rated = 0.0;
    run_cmd->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    run_cmd->add_option("--kind", kind, "synthetic | wind | mts-demo");
    run_cmd->add_option("--policies", policies, "comma list: gp-md,cgp-lcb,md-known,minc-known,stationary");
    run_cmd->add_option("--seeds", seeds, "comma list of seeds, or a:b for the range a..b");
    run_cmd->add_option("--rho", rhos, "comma list of rho values");
    run_cmd->add_option("--steps", steps, "horizon H per episode");
    run_cmd->add_option("--episodes", episodes, "number of episodes");
    run_cmd->add_option("--tau", tau, "HST base tau > 1");
    run_cmd->add_option("--kappa", kappa, "potential constant kappa >= 1");
    run_cmd->add_option("--update-mode", update_mode, "per-step | per-episode");
    run_cmd->add_option("--beta-mode", beta_mode, "constant | theory");
    run_cmd->add_option("--weighting", weighting, "rho | convex");
    run_cmd->add_option("--starts", start_mode, "random | all");
    run_cmd->add_option("--v-rated", v_rated, "rated windspeed in m/s");
    run_cmd->add_option("--out", out, "output directory");
    run_cmd->add_option("--dataset", dataset, "wind CSV (timestamp,altitude_m,windspeed_ms)");

    auto* report_cmd = app.add_subcommand("report", "aggregate a finished run directory");
    std::string report_dir;
    report_cmd->add_option("dir", report_dir, "run directory")->required();

    auto* demo_cmd = app.add_subcommand("mts-demo", "print the depth-3 mirror-descent walkthrough");
    double demo_kappa = 1.0;
    demo_cmd->add_option("--kappa", demo_kappa, "potential constant kappa >= 1");

    CLI11_PARSE(app, argc, argv);

    if (*demo_cmd) {
        try {
            gpmd::mts_demo(std::cout, demo_kappa);
        } catch (const gpmd::Error& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        }
        return 0;
    }

    if (*report_cmd) {
        try {
            const auto r = gpmd::report(report_dir);
            std::cout << "policy,rho,cells,total_mean,total_std,movement_mean,movement_std\n";
            for (const auto& row : r.rows)
                std::cout << row.policy << ',' << gpmd::csv::format_double(row.rho) << ',' << row.cells << ','
                          << gpmd::csv::format_double(row.total_mean) << ',' << gpmd::csv::format_double(row.total_std)
                          << ',' << gpmd::csv::format_double(row.movement_mean) << ','
                          << gpmd::csv::format_double(row.movement_std) << '\n';
            for (const auto& m : r.missing) std::cerr << "missing cell: " << m << '\n';
            std::cout << "wrote " << (std::filesystem::path(report_dir) / "aggregate.csv").string() << '\n';
            return r.missing.empty() ? 0 : 2;
        } catch (const gpmd::Error& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        }
    }

    gpmd::RunConfig config;
    try {
        nlohmann::json j = nlohmann::json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw gpmd::ParameterError("config: " + std::string(e.what()));
            }
        }
        // Flags override the file.
        if (!kind.empty()) j["kind"] = kind;
        if (!policies.empty()) j["policies"] = split_list(policies);
        if (!seeds.empty()) {
            std::vector<std::uint64_t> s;
            const auto colon = seeds.find(':');
            if (colon != std::string::npos) {
                const auto a = std::stoull(seeds.substr(0, colon));
                const auto b = std::stoull(seeds.substr(colon + 1));
                for (auto x = a; x <= b; ++x) s.push_back(x);
            } else {
                for (const auto& t : split_list(seeds)) s.push_back(std::stoull(t));
            }
            j["seeds"] = s;
        }
        if (!rhos.empty()) {
            std::vector<double> r;
            for (const auto& t : split_list(rhos)) {
                const auto v = gpmd::csv::parse_double(t);
                if (!v) throw gpmd::ParameterError("rho: '" + t + "' is not a number");
                r.push_back(*v);
            }
            j["rhos"] = r;
        }
        if (run_cmd->count("--steps")) j["steps"] = steps;
        if (run_cmd->count("--episodes")) j["episodes"] = episodes;
        if (run_cmd->count("--tau")) j["tau"] = tau;
        if (run_cmd->count("--kappa")) j["kappa"] = kappa;
        if (!update_mode.empty()) j["update_mode"] = update_mode;
        if (!beta_mode.empty()) j["beta_mode"] = beta_mode;
        if (!weighting.empty()) j["weighting"] = weighting;
        if (!start_mode.empty()) j["start_mode"] = start_mode;
        if (run_cmd->count("--v-rated")) j["energy.v_rated"] = v_rated;
        if (!out.empty()) j["out"] = out;
        if (!dataset.empty()) j["dataset"] = dataset;
        config = gpmd::RunConfig::from_json(j);
        config.validate();
    } catch (const std::invalid_argument&) {
        std::cerr << "config error: seeds: not an integer list\n";
        return 1;
    } catch (const std::out_of_range&) {
        std::cerr << "config error: seeds: value out of range\n";
        return 1;
    } catch (const gpmd::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }

    try {
        const auto status = gpmd::run(config, std::cerr);
        if (config.kind != gpmd::ExperimentKind::MtsDemo)
            std::cerr << status.cells << " cells, " << status.failed << " failed; output in " << config.out_dir.string()
                      << '\n';
        return status.exit_code;
    } catch (const gpmd::ParameterError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
