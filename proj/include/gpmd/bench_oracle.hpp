#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "gpmd/metric_hst.hpp"

namespace gpmd {

struct StepRecord {
    /// Column of the cost table played at this step.
    std::size_t context;
    std::size_t action;
    /// Service cost as charged (after any rho weighting).
    double service;
    /// Movement cost as charged, measured with the original metric d.
    double movement;
    /// What the learner observed.
    double y;
};

/// One episode: totals S_m, M_m and cost_m = S_m + M_m.
class EpisodeLog {
public:
    explicit EpisodeLog(std::size_t x0) : x0_(x0) {}

    void push(const StepRecord& r);

    std::size_t x0() const { return x0_; }
    const std::vector<StepRecord>& steps() const { return steps_; }
    std::vector<std::size_t> contexts() const;
    double service() const { return service_; }
    double movement() const { return movement_; }
    double cost() const { return service_ + movement_; }

private:
    std::size_t x0_;
    std::vector<StepRecord> steps_;
    double service_ = 0.0;
    double movement_ = 0.0;
};

/// Offline-optimal action sequence D*_m and its cost.
struct OfflineSolution {
    std::vector<std::size_t> actions;
    double cost = 0.0;
};

/// Exact minimizer of sum_h service(x_h, c_h) + d(x_{h-1}, x_h) from x0 by dynamic programming
/// over (step, action), O(H n^2). `service` is n x C; ties go to the lowest action index.
/// InputError on out-of-range or non-finite table entries.
OfflineSolution offline_optimal(const FiniteMetric& metric, const Eigen::MatrixXd& service,
                                std::span<const std::size_t> contexts, std::size_t x0);

/// The same DP on a lower-confidence table clamped at zero (the hallucinated benchmark).
OfflineSolution hallucinated_optimal(const FiniteMetric& metric, const Eigen::MatrixXd& lcb_table,
                                     std::span<const std::size_t> contexts, std::size_t x0);

/// Cost of a fixed action sequence under the same accounting.
double sequence_cost(const FiniteMetric& metric, const Eigen::MatrixXd& service, std::span<const std::size_t> contexts,
                     std::size_t x0, std::span<const std::size_t> actions);

/// (alpha, beta)-approximate regret: r_m = cost_m - alpha * opt_m - beta, R = sum r_m.
struct RegretReport {
    double alpha = 1.0;
    double beta = 0.0;
    std::vector<double> episode_cost;
    std::vector<double> optimal_cost;
    std::vector<double> episode_regret;
    /// Partial sums R_1, ..., R_N.
    std::vector<double> cumulative;
    /// R_m / m.
    std::vector<double> average;

    double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
    nlohmann::json to_json() const;
};

RegretReport regret(std::span<const double> episode_costs, std::span<const double> opt_costs, double alpha, double beta);
RegretReport regret(std::span<const EpisodeLog> logs, std::span<const double> opt_costs, double alpha, double beta);

/// Synthetic benchmark of the experiments: GP-sampled cost over a square action grid times a
/// finite context set.
struct SynthOptions {
    std::size_t grid_side = 20;
    std::size_t num_contexts = 40;
    double lengthscale = 0.2;
    double jitter = 1e-8;
};

struct SynthInstance {
    FiniteMetric metric;
    /// Action coordinates in [0,1]^2, one row per action (row-major over the grid).
    Eigen::MatrixXd action_coords;
    /// Context values drawn uniformly from (0,1).
    Eigen::VectorXd contexts;
    /// Normalized cost, actions x contexts.
    Eigen::MatrixXd f;
    /// f = scale * (raw - shift).
    double scale = 1.0;
    double shift = 0.0;
    /// Observation noise standard deviation (1% of the range of f).
    double noise_sigma = 0.0;
};

/// Joint GP(0, k) draw over every (action, context) pair with a squared-exponential kernel,
/// unnormalized. The product kernel factors over the two grid axes and the context axis, so the
/// joint Cholesky factor is the Kronecker product of three small factors.
Eigen::MatrixXd sample_gp_table(const Eigen::VectorXd& axis, const Eigen::VectorXd& contexts, double lengthscale,
                                double jitter, std::uint64_t seed);

/// Samples, then normalizes: minimum subtracted, scaled so that mean(f) equals the mean pairwise
/// movement cost; noise sigma set to 1% of the range of f.
SynthInstance synth_instance(std::uint64_t seed, const SynthOptions& options = {});

} // namespace gpmd
