#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gpmd/metric_hst.hpp"

namespace gpmd {

/// Vertex marginals z over an HST: z_root = 1 and z_u = sum of z over children of u.
struct TreeState {
    std::vector<double> z;
};

/// Conditional probabilities q_v = P(leaf under v | leaf under parent(v)); the root entry is
/// unused and kept at 1.
struct CondState {
    std::vector<double> q;
};

/// Per-vertex costs; leaf entries are the service-cost estimates, internal entries the
/// q-weighted averages of their children.
struct VertexCosts {
    std::vector<double> cost;
};

/// The mirror-descent potential restricted to the children of one internal vertex:
///   Phi(q) = (1/kappa) sum_v (w_v / eta_v) (q_v + delta_v) log(q_v + delta_v).
struct ChildPotential {
    std::vector<double> weight;
    std::vector<double> eta;
    std::vector<double> delta;
    double kappa = 1.0;

    /// Pulls (w, eta, delta) for the children of internal vertex u. ParameterError if kappa < 1.
    static ChildPotential at(const HstTree& tree, VertexId u, double kappa);

    std::size_t size() const { return weight.size(); }
};

/// Bregman divergence D(p || q) of the child potential.
double bregman(const ChildPotential& pot, std::span<const double> p, std::span<const double> q);

/// The mirror-descent objective D(p || q_prev) + <p, cost>.
double md_objective(const ChildPotential& pot, std::span<const double> p, std::span<const double> q_prev,
                    std::span<const double> cost);

struct VertexUpdate {
    std::vector<double> q;
    /// Multiplier of the sum-to-one constraint.
    double beta = 0.0;
    /// Multipliers of the non-negativity constraints.
    std::vector<double> alpha;
    /// |sum(q) - 1| before the final renormalization.
    double simplex_residual = 0.0;
    /// max_v alpha_v * q_v.
    double slackness_residual = 0.0;
    int iterations = 0;
};

struct MdSolverOptions {
    double simplex_tol = 1e-10;
    double slackness_tol = 1e-8;
    int max_iterations = 10000;
};

/// Exact minimizer of D(p || q_prev) + <p, cost> over the child simplex.
///
/// KKT: p_v = (q_v + delta_v) exp{kappa (eta_v / w_v) (beta - cost_v + alpha_v)} - delta_v with
/// alpha_v >= 0 and alpha_v p_v = 0. For a fixed beta the active multipliers are available in
/// closed form (alpha_v is exactly what lifts a negative unconstrained p_v to zero), and sum(p)
/// is strictly increasing in beta, so beta is found by bisection.
///
/// Children with zero edge weight (duplicate-point fan-outs) make the potential degenerate; all
/// children of u must then have zero weight and the update is the limit: q_prev when the costs are
/// all equal, otherwise the mass moves to the cheapest children in proportion to q_prev + delta.
VertexUpdate md_update_vertex(const ChildPotential& pot, std::span<const double> q_prev, std::span<const double> cost,
                              const MdSolverOptions& options = {});

struct MdTraceRow {
    VertexId vertex;
    VertexId child;
    double q_before;
    double q_after;
    double child_cost;
};

struct MdStepResult {
    CondState q;
    VertexCosts costs;
};

/// One mirror-descent step over the whole tree: internal vertices are visited children-first;
/// each solves its vertex update against its children's (final) costs and then takes the new
/// q-weighted average of those costs as its own cost. `leaf_costs` is indexed by metric point.
MdStepResult md_step(const HstTree& tree, double kappa, const CondState& q_prev, std::span<const double> leaf_costs,
                     const MdSolverOptions& options = {},
                     const std::function<void(const MdTraceRow&)>& trace = {});

/// z_root = 1, z_v = z_parent(v) * q_v.
TreeState delta_map(const HstTree& tree, const CondState& q);

/// q_v = z_v / z_parent(v); children of a zero-mass vertex get the uniform distribution.
CondState delta_inverse(const HstTree& tree, const TreeState& z);

/// Deterministic state sitting on the leaf of `point`.
TreeState point_mass_state(const HstTree& tree, std::size_t point);

/// Leaf probabilities l(z), indexed by metric point.
std::vector<double> leaf_distribution(const HstTree& tree, const TreeState& z);

/// Lifts a leaf distribution (indexed by metric point) to vertex marginals.
TreeState lift(const HstTree& tree, std::span<const double> leaf_probs);

/// Conditional distribution over the children of u.
std::vector<double> child_distribution(const HstTree& tree, const CondState& q, VertexId u);

} // namespace gpmd
