#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gpmd/energy_wind.hpp"
#include "gpmd/gp_model.hpp"
#include "gpmd/metric_hst.hpp"
#include "gpmd/mts_md.hpp"
#include "gpmd/rng.hpp"

namespace gpmd {

/// Source of per-action service-cost estimates for one context. Observations are buffered by
/// observe() and only reach the estimate on flush().
class CostLearner {
public:
    virtual ~CostLearner() = default;
    /// Lower confidence bound of the (unweighted) service cost of every action.
    virtual std::vector<double> lcb(std::size_t context) const = 0;
    virtual void observe(std::size_t action, std::size_t context, double y) = 0;
    virtual void flush() = 0;
    /// Number of buffered observations not yet flushed.
    virtual std::size_t pending() const = 0;
    virtual std::unique_ptr<CostLearner> clone() const = 0;
};

/// The true cost table, returned verbatim; observations are ignored.
class ExactCostLearner final : public CostLearner {
public:
    explicit ExactCostLearner(Eigen::MatrixXd f) : f_(std::move(f)) {}
    std::vector<double> lcb(std::size_t context) const override;
    void observe(std::size_t, std::size_t, double) override {}
    void flush() override {}
    std::size_t pending() const override { return 0; }
    std::unique_ptr<CostLearner> clone() const override { return std::make_unique<ExactCostLearner>(*this); }

private:
    Eigen::MatrixXd f_;
};

/// GP directly on the service cost; inputs are [action features, context features].
class GpCostLearner final : public CostLearner {
public:
    GpCostLearner(GpModel model, Eigen::MatrixXd action_features, Eigen::MatrixXd context_features, BetaSchedule beta);

    std::vector<double> lcb(std::size_t context) const override;
    void observe(std::size_t action, std::size_t context, double y) override;
    void flush() override;
    std::size_t pending() const override { return buffer_.size(); }
    std::unique_ptr<CostLearner> clone() const override { return std::make_unique<GpCostLearner>(*this); }

    const GpModel& model() const { return model_; }
    Eigen::VectorXd input(std::size_t action, std::size_t context) const;

private:
    GpModel model_;
    Eigen::MatrixXd actions_;
    Eigen::MatrixXd contexts_;
    BetaSchedule beta_;
    std::vector<Observation> buffer_;
};

/// GP on windspeed over the (altitude, hour) grid; cost bounds come from propagate_bounds. The
/// prior mean is the running mean of flushed observations.
class WindCostLearner final : public CostLearner {
public:
    /// `context_hours[c]` is the hour of day (0-23) of context c. The kernel sees (altitude, hour).
    WindCostLearner(const Kernel& kernel, GpHyper hyper, EnergyParams energy, std::vector<double> altitudes,
                    std::vector<int> context_hours, BetaSchedule beta);

    std::vector<double> lcb(std::size_t context) const override;
    CostBounds bounds(std::size_t context) const;
    void observe(std::size_t action, std::size_t context, double y) override;
    void flush() override;
    std::size_t pending() const override { return buffer_.size(); }
    std::unique_ptr<CostLearner> clone() const override { return std::make_unique<WindCostLearner>(*this); }

    const PooledGp& model() const { return model_; }
    double prior_mean() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }

private:
    std::size_t point(std::size_t action, int hour) const { return action * 24 + static_cast<std::size_t>(hour); }

    PooledGp model_;
    EnergyParams energy_;
    std::vector<double> altitudes_;
    std::vector<int> hours_;
    BetaSchedule beta_;
    std::vector<std::pair<std::size_t, double>> buffer_;
    double sum_ = 0.0;
    std::size_t count_ = 0;
};

enum class PolicyKind { GpMd, CgpLcb, MdKnown, MinCKnown, Stationary };

PolicyKind parse_policy(const std::string& name);
std::string policy_name(PolicyKind kind);
/// True for the kinds that learn from observations (GP-MD, CGP-LCB).
bool policy_learns(PolicyKind kind);
/// True for the kinds that run mirror descent on a tree.
bool policy_uses_tree(PolicyKind kind);

enum class UpdateMode { PerEpisode, PerStep };

UpdateMode parse_update_mode(const std::string& name);

struct PolicyOptions {
    PolicyKind kind = PolicyKind::GpMd;
    /// Multiplies the service cost only.
    double rho = 1.0;
    double kappa = 1.0;
    UpdateMode update_mode = UpdateMode::PerStep;
    MdSolverOptions md;
};

/// Diagnostics of one act() call.
struct ActInfo {
    std::size_t action = 0;
    /// Root cost of the mirror-descent recursion (expected leaf cost under the new state).
    double root_cost = 0.0;
    /// W1 under d_T between the previous and new leaf distributions.
    double tree_step = 0.0;
    /// l(z_h); empty for non-MD kinds.
    std::vector<double> distribution;
};

/// Everything the harness records about one step.
struct StepOutcome {
    std::size_t action;
    double service_true;
    double movement_true;
    double y;
    double root_cost;
    double tree_step;
};

/// The GP-MD controller and its baselines behind one interface.
class Policy {
public:
    /// `tree` is required for the mirror-descent kinds; `learner` supplies cost estimates (the
    /// exact table for the known-cost kinds). Stationary may pass a null learner.
    Policy(PolicyOptions options, const FiniteMetric& metric, std::shared_ptr<const HstTree> tree,
           std::unique_ptr<CostLearner> learner);

    Policy(const Policy& other);
    Policy& operator=(const Policy&) = delete;

    void begin_episode(std::size_t x0);
    ActInfo act(std::size_t context, Rng& rng);
    void observe(std::size_t action, std::size_t context, double y);
    /// Flushes buffered observations (per-episode mode).
    void end_episode();

    PolicyKind kind() const { return options_.kind; }
    const PolicyOptions& options() const { return options_; }
    std::size_t x0() const { return x0_; }
    std::size_t previous_action() const { return x_prev_; }
    std::size_t step() const { return step_; }
    std::size_t episode() const { return episode_; }
    const CondState& cond_state() const { return q_; }
    const TreeState& tree_state() const { return z_prev_; }
    const CostLearner* learner() const { return learner_.get(); }
    /// Leaf costs that act() would feed to the recursion for `context`.
    std::vector<double> leaf_costs(std::size_t context) const;

private:
    std::size_t argmin_lcb(std::size_t context) const;

    PolicyOptions options_;
    const FiniteMetric* metric_;
    std::shared_ptr<const HstTree> tree_;
    std::unique_ptr<CostLearner> learner_;
    bool begun_ = false;
    std::size_t x0_ = 0;
    std::size_t x_prev_ = 0;
    std::size_t step_ = 0;
    std::size_t episode_ = 0;
    CondState q_;
    TreeState z_prev_;
};

} // namespace gpmd
