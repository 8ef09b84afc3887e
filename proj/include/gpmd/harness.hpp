#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "gpmd/bench_oracle.hpp"
#include "gpmd/energy_wind.hpp"
#include "gpmd/gp_model.hpp"
#include "gpmd/policies.hpp"

namespace gpmd {

enum class ExperimentKind { Synthetic, Wind, MtsDemo };

ExperimentKind parse_experiment(const std::string& name);
std::string experiment_name(ExperimentKind kind);

/// How service and movement enter the charged cost.
enum class Weighting {
    /// rho * f + d
    Rho,
    /// rho / (1 + rho) * f + 1 / (1 + rho) * d
    Convex,
};

enum class StartMode {
    /// One start per seed, drawn from the seed's start stream.
    Random,
    /// Every action is a start.
    All,
};

/// Kernel hyperparameters; unset values take the experiment defaults.
struct GpConfig {
    std::optional<double> lengthscale;
    std::optional<double> outputscale;
    std::optional<double> lambda;
    double rkhs_bound = 1.0;
    double delta = 0.05;
};

struct RunConfig {
    ExperimentKind kind = ExperimentKind::Synthetic;
    std::vector<PolicyKind> policies{PolicyKind::GpMd, PolicyKind::CgpLcb, PolicyKind::MdKnown, PolicyKind::MinCKnown,
                                     PolicyKind::Stationary};
    std::vector<std::uint64_t> seeds{1};
    std::vector<double> rhos{0.25, 0.5, 1.0, 2.0, 4.0};
    std::size_t steps = 500;
    std::size_t episodes = 1;
    double tau = 5.0;
    double kappa = 1.0;
    BetaMode beta_mode = BetaMode::Constant;
    double beta_constant = 2.0;
    UpdateMode update_mode = UpdateMode::PerStep;
    Weighting weighting = Weighting::Rho;
    StartMode start_mode = StartMode::Random;
    /// Regret constants.
    double alpha = 1.0;
    double beta = 0.0;
    std::filesystem::path out_dir = "runs/out";
    /// Wind CSV; synthetic wind when empty.
    std::filesystem::path dataset;
    SynthOptions synth;
    WindGenOptions wind_gen;
    EnergyParams energy;
    GpConfig gp;

    /// ParameterError naming the offending field.
    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep defaults; unknown keys are rejected.
    static RunConfig from_json(const nlohmann::json& j);
    /// FNV-1a 64 of the canonical JSON dump, hex.
    std::string hash() const;
};

/// One (policy, seed, rho, start) cell.
struct CellKey {
    PolicyKind policy;
    std::uint64_t seed;
    double rho;
    std::size_t start;

    std::string name() const;
};

struct CellResult {
    CellKey key;
    bool ok = false;
    std::string error;
    double service = 0.0;
    double movement = 0.0;
    double total = 0.0;
    double optimal = 0.0;
    /// Wind only: rho sum E_S - sum E_M and the unweighted sum E_S - sum E_M.
    std::optional<double> energy;
    std::optional<double> energy_unweighted;
    RegretReport regret;
    std::vector<EpisodeLog> episodes;

    nlohmann::json summary() const;
};

/// Problem data shared by every cell of one seed.
struct SeedProblem {
    std::uint64_t seed = 0;
    std::shared_ptr<const FiniteMetric> metric;
    std::shared_ptr<const HstTree> tree;
    /// True service cost, actions x contexts (unweighted).
    Eigen::MatrixXd f;
    /// Context index per (episode, step).
    std::vector<std::vector<std::size_t>> contexts;
    /// Observation noise per (episode, step), added to f at the played action.
    std::vector<std::vector<double>> noise;
    /// Starting actions to sweep.
    std::vector<std::size_t> starts;
    /// Synthetic: features per action and per context for the cost GP.
    Eigen::MatrixXd action_features;
    Eigen::MatrixXd context_features;
    double noise_sigma = 0.0;
    double f_scale = 1.0;
    /// Wind: table, E_S table (altitudes x times), and windspeed observations replace f + noise.
    std::shared_ptr<const WindTable> wind;
    Eigen::MatrixXd energy;
};

SeedProblem build_problem(const RunConfig& config, std::uint64_t seed);

/// Builds the policy of one cell (fresh learner, shared tree).
Policy make_policy(const RunConfig& config, const SeedProblem& problem, PolicyKind kind, double rho);

/// Runs one cell; throws on policy errors.
CellResult run_cell(const RunConfig& config, const SeedProblem& problem, const CellKey& key);

/// Writes the per-step CSV of a cell.
void write_cell_csv(const CellResult& result, double service_weight, double movement_weight,
                    const std::filesystem::path& path);

/// Service and movement multipliers of the charged cost for one rho.
std::pair<double, double> cost_weights(const RunConfig& config, double rho);

struct RunStatus {
    int exit_code = 0;
    std::size_t cells = 0;
    std::size_t failed = 0;
};

/// Runs every cell with GPMD_WORKERS threads (default 1), writing cells/<name>.csv,
/// cells/<name>.json, summary.json and manifest.json under config.out_dir.
RunStatus run(const RunConfig& config, std::ostream& log);

struct AggregateRow {
    std::string policy;
    double rho;
    std::size_t cells;
    double total_mean, total_std;
    double movement_mean, movement_std;
    double service_mean, service_std;
    std::optional<double> energy_mean, energy_std;
    double regret_mean;
};

struct ReportResult {
    std::vector<AggregateRow> rows;
    std::vector<std::string> missing;
};

/// Aggregates a finished run directory into aggregate.csv (mean and sample std across cells per
/// (policy, rho)). Missing or failed cells are listed and skipped.
ReportResult report(const std::filesystem::path& dir);

/// The 8-leaf, depth-3 binary tree walkthrough: prints the conditional probabilities and vertex
/// costs layer by layer.
void mts_demo(std::ostream& out, double kappa = 1.0);

} // namespace gpmd
