#include "gpmd/policies.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "gpmd/errors.hpp"
#include "gpmd/tree_transport.hpp"

namespace gpmd {

std::vector<double> ExactCostLearner::lcb(std::size_t context) const {
    if (context >= static_cast<std::size_t>(f_.cols())) throw DomainError("context index out of range");
    const Eigen::VectorXd col = f_.col(static_cast<Eigen::Index>(context));
    return {col.data(), col.data() + col.size()};
}

// ---------------------------------------------------------------------------------------------

GpCostLearner::GpCostLearner(GpModel model, Eigen::MatrixXd action_features, Eigen::MatrixXd context_features,
                             BetaSchedule beta)
    : model_(std::move(model)), actions_(std::move(action_features)), contexts_(std::move(context_features)), beta_(beta) {
    if (actions_.cols() + contexts_.cols() != model_.input_dim())
        throw ParameterError("action and context features do not match the GP input dimension");
}

Eigen::VectorXd GpCostLearner::input(std::size_t action, std::size_t context) const {
    Eigen::VectorXd x(model_.input_dim());
    x << actions_.row(static_cast<Eigen::Index>(action)).transpose(),
        contexts_.row(static_cast<Eigen::Index>(context)).transpose();
    return x;
}

std::vector<double> GpCostLearner::lcb(std::size_t context) const {
    if (context >= static_cast<std::size_t>(contexts_.rows())) throw DomainError("context index out of range");
    const Eigen::Index n = actions_.rows();
    Eigen::MatrixXd inputs(n, model_.input_dim());
    inputs.leftCols(actions_.cols()) = actions_;
    inputs.rightCols(contexts_.cols()).rowwise() = contexts_.row(static_cast<Eigen::Index>(context));
    const auto [mu, sd] = model_.posterior_batch(inputs);
    const double beta = beta_.at(model_);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = mu(i) - beta * sd(i);
    return out;
}

void GpCostLearner::observe(std::size_t action, std::size_t context, double y) {
    if (!std::isfinite(y)) throw InputError("non-finite observation");
    if (action >= static_cast<std::size_t>(actions_.rows()) || context >= static_cast<std::size_t>(contexts_.rows()))
        throw DomainError("observation outside the action or context set");
    buffer_.push_back({input(action, context), y});
}

void GpCostLearner::flush() {
    model_.append(buffer_);
    buffer_.clear();
}

// ---------------------------------------------------------------------------------------------

namespace {

Eigen::MatrixXd altitude_hour_grid(const std::vector<double>& altitudes) {
    Eigen::MatrixXd grid(static_cast<Eigen::Index>(altitudes.size() * 24), 2);
    Eigen::Index r = 0;
    for (double a : altitudes)
        for (int h = 0; h < 24; ++h) grid.row(r++) << a, static_cast<double>(h);
    return grid;
}

} // namespace

WindCostLearner::WindCostLearner(const Kernel& kernel, GpHyper hyper, EnergyParams energy,
                                 std::vector<double> altitudes, std::vector<int> context_hours, BetaSchedule beta)
    : model_(kernel, hyper, altitude_hour_grid(altitudes)), energy_(energy), altitudes_(std::move(altitudes)),
      hours_(std::move(context_hours)), beta_(beta) {
    for (int h : hours_)
        if (h < 0 || h > 23) throw ParameterError("context hour outside 0-23");
}

CostBounds WindCostLearner::bounds(std::size_t context) const {
    if (context >= hours_.size()) throw DomainError("context index out of range");
    std::vector<std::size_t> pts(altitudes_.size());
    for (std::size_t a = 0; a < pts.size(); ++a) pts[a] = point(a, hours_[context]);
    const auto [mu, sd] = model_.posterior(pts, prior_mean());
    return propagate_bounds(energy_, mu, sd, beta_.at(model_));
}

std::vector<double> WindCostLearner::lcb(std::size_t context) const { return bounds(context).lcb; }

void WindCostLearner::observe(std::size_t action, std::size_t context, double y) {
    if (!std::isfinite(y)) throw InputError("non-finite observation");
    if (action >= altitudes_.size() || context >= hours_.size())
        throw DomainError("observation outside the action or context set");
    buffer_.emplace_back(point(action, hours_[context]), y);
}

void WindCostLearner::flush() {
    for (const auto& [p, y] : buffer_) {
        model_.observe(p, y);
        sum_ += y;
    }
    count_ += buffer_.size();
    buffer_.clear();
}

// ---------------------------------------------------------------------------------------------

PolicyKind parse_policy(const std::string& name) {
    std::string s;
    for (char c : name) s += c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "gp-md") return PolicyKind::GpMd;
    if (s == "cgp-lcb") return PolicyKind::CgpLcb;
    if (s == "md-known") return PolicyKind::MdKnown;
    if (s == "minc-known") return PolicyKind::MinCKnown;
    if (s == "stationary") return PolicyKind::Stationary;
    throw ParameterError("unknown policy '" + name + "'");
}

std::string policy_name(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::GpMd: return "gp-md";
    case PolicyKind::CgpLcb: return "cgp-lcb";
    case PolicyKind::MdKnown: return "md-known";
    case PolicyKind::MinCKnown: return "minc-known";
    case PolicyKind::Stationary: return "stationary";
    }
    return "?";
}

bool policy_learns(PolicyKind kind) { return kind == PolicyKind::GpMd || kind == PolicyKind::CgpLcb; }

bool policy_uses_tree(PolicyKind kind) { return kind == PolicyKind::GpMd || kind == PolicyKind::MdKnown; }

UpdateMode parse_update_mode(const std::string& name) {
    if (name == "per-episode" || name == "episode") return UpdateMode::PerEpisode;
    if (name == "per-step" || name == "step") return UpdateMode::PerStep;
    throw ParameterError("unknown update mode '" + name + "'");
}

// ---------------------------------------------------------------------------------------------

Policy::Policy(PolicyOptions options, const FiniteMetric& metric, std::shared_ptr<const HstTree> tree,
               std::unique_ptr<CostLearner> learner)
    : options_(options), metric_(&metric), tree_(std::move(tree)), learner_(std::move(learner)) {
    if (!(options_.rho > 0.0)) throw ParameterError("rho must be positive");
    if (policy_uses_tree(options_.kind)) {
        if (!tree_) throw ParameterError(policy_name(options_.kind) + " needs an HST");
        if (tree_->num_points() != metric.size()) throw ParameterError("tree and metric disagree on the action count");
        if (!(options_.kappa >= 1.0)) throw ParameterError("kappa must be >= 1");
    }
    if (options_.kind != PolicyKind::Stationary && !learner_)
        throw ParameterError(policy_name(options_.kind) + " needs a cost source");
}

Policy::Policy(const Policy& other)
    : options_(other.options_), metric_(other.metric_), tree_(other.tree_),
      learner_(other.learner_ ? other.learner_->clone() : nullptr), begun_(other.begun_), x0_(other.x0_),
      x_prev_(other.x_prev_), step_(other.step_), episode_(other.episode_), q_(other.q_), z_prev_(other.z_prev_) {}

void Policy::begin_episode(std::size_t x0) {
    if (x0 >= metric_->size()) throw DomainError("starting action " + std::to_string(x0) + " out of range");
    if (begun_) ++episode_;
    begun_ = true;
    x0_ = x0;
    x_prev_ = x0;
    step_ = 0;
    if (tree_) {
        z_prev_ = point_mass_state(*tree_, x0);
        q_ = delta_inverse(*tree_, z_prev_);
    }
}

std::vector<double> Policy::leaf_costs(std::size_t context) const {
    auto c = learner_->lcb(context);
    for (double& v : c) v = std::max(0.0, options_.rho * v);
    return c;
}

std::size_t Policy::argmin_lcb(std::size_t context) const {
    const auto c = learner_->lcb(context);
    // First minimizer: ties go to the lowest index.
    return static_cast<std::size_t>(std::min_element(c.begin(), c.end()) - c.begin());
}

ActInfo Policy::act(std::size_t context, Rng& rng) {
    if (!begun_) throw DomainError("act() before begin_episode()");
    ActInfo info;
    switch (options_.kind) {
    case PolicyKind::Stationary:
        info.action = x0_;
        break;
    case PolicyKind::CgpLcb:
    case PolicyKind::MinCKnown:
        info.action = argmin_lcb(context);
        break;
    case PolicyKind::GpMd:
    case PolicyKind::MdKnown: {
        const auto costs = leaf_costs(context);
        auto res = md_step(*tree_, options_.kappa, q_, costs, options_.md);
        TreeState z_new = delta_map(*tree_, res.q);
        const auto before = leaf_distribution(*tree_, z_prev_);
        auto after = leaf_distribution(*tree_, z_new);
        const Coupling coupling = optimal_coupling(*tree_, before, after);
        info.action = sample_next(coupling, x_prev_, rng);
        info.root_cost = res.costs.cost[0];
        info.tree_step = tree_wasserstein(*tree_, before, after);
        info.distribution = std::move(after);
        q_ = std::move(res.q);
        z_prev_ = std::move(z_new);
        break;
    }
    }
    x_prev_ = info.action;
    ++step_;
    return info;
}

void Policy::observe(std::size_t action, std::size_t context, double y) {
    if (!std::isfinite(y)) throw InputError("non-finite observation");
    if (!policy_learns(options_.kind)) return;
    learner_->observe(action, context, y);
    if (options_.update_mode == UpdateMode::PerStep) learner_->flush();
}

void Policy::end_episode() {
    if (learner_ && policy_learns(options_.kind)) learner_->flush();
}

} // namespace gpmd
