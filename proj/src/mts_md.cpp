#include "gpmd/mts_md.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gpmd/errors.hpp"

namespace gpmd {

ChildPotential ChildPotential::at(const HstTree& tree, VertexId u, double kappa) {
    if (!(kappa >= 1.0)) throw ParameterError("kappa must be >= 1");
    const auto& kids = tree.children(u);
    if (kids.empty()) throw DomainError("vertex " + std::to_string(u) + " is a leaf");
    ChildPotential pot;
    pot.kappa = kappa;
    pot.weight.reserve(kids.size());
    pot.eta.reserve(kids.size());
    pot.delta.reserve(kids.size());
    for (VertexId c : kids) {
        const auto r = tree.leaf_ratios(c);
        pot.weight.push_back(tree.weight(c));
        pot.eta.push_back(r.eta);
        pot.delta.push_back(r.delta);
    }
    return pot;
}

namespace {

void check_sizes(const ChildPotential& pot, std::span<const double> a, std::span<const double> b) {
    if (a.size() != pot.size() || b.size() != pot.size())
        throw DomainError("distribution size does not match the number of children");
}

} // namespace

double bregman(const ChildPotential& pot, std::span<const double> p, std::span<const double> q) {
    check_sizes(pot, p, q);
    double total = 0.0;
    for (std::size_t v = 0; v < pot.size(); ++v) {
        const double a = p[v] + pot.delta[v];
        const double b = q[v] + pot.delta[v];
        total += pot.weight[v] / pot.eta[v] * (a * std::log(a / b) + q[v] - p[v]);
    }
    return std::max(0.0, total / pot.kappa);
}

double md_objective(const ChildPotential& pot, std::span<const double> p, std::span<const double> q_prev,
                    std::span<const double> cost) {
    check_sizes(pot, p, cost);
    double linear = 0.0;
    for (std::size_t v = 0; v < pot.size(); ++v) linear += p[v] * cost[v];
    return bregman(pot, p, q_prev) + linear;
}

namespace {

VertexUpdate degenerate_update(const ChildPotential& pot, std::span<const double> q_prev, std::span<const double> cost) {
    const std::size_t k = pot.size();
    VertexUpdate out;
    out.alpha.assign(k, 0.0);
    const auto [lo, hi] = std::minmax_element(cost.begin(), cost.end());
    const double tol = 1e-12 * std::max(1.0, std::abs(*lo));
    if (*hi - *lo <= tol) {
        out.q.assign(q_prev.begin(), q_prev.end());
        out.beta = *lo;
        return out;
    }
    out.q.assign(k, 0.0);
    double mass = 0.0;
    for (std::size_t v = 0; v < k; ++v)
        if (cost[v] - *lo <= tol) mass += q_prev[v] + pot.delta[v];
    for (std::size_t v = 0; v < k; ++v)
        if (cost[v] - *lo <= tol) out.q[v] = (q_prev[v] + pot.delta[v]) / mass;
    out.beta = *lo;
    return out;
}

} // namespace

VertexUpdate md_update_vertex(const ChildPotential& pot, std::span<const double> q_prev, std::span<const double> cost,
                              const MdSolverOptions& options) {
    check_sizes(pot, q_prev, cost);
    const std::size_t k = pot.size();
    if (k == 0) throw DomainError("vertex has no children");
    for (std::size_t v = 0; v < k; ++v) {
        if (!std::isfinite(cost[v])) throw InputError("non-finite child cost");
        if (!(q_prev[v] >= 0.0) || !std::isfinite(q_prev[v])) throw InputError("previous distribution has a negative entry");
    }
    if (k == 1) {
        VertexUpdate out;
        out.q = {1.0};
        out.alpha = {0.0};
        out.beta = cost[0];
        return out;
    }

    const std::size_t zero_weight = static_cast<std::size_t>(
        std::count_if(pot.weight.begin(), pot.weight.end(), [](double w) { return w == 0.0; }));
    if (zero_weight == k) return degenerate_update(pot, q_prev, cost);
    if (zero_weight != 0) throw DomainError("children of one vertex mix zero and positive edge weights");

    // Work relative to the cheapest child: beta is then O(cost spread) instead of O(|cost|), and
    // its float resolution no longer depends on a common offset of the costs.
    const double ref = *std::min_element(cost.begin(), cost.end());
    std::vector<double> rel(k);
    for (std::size_t v = 0; v < k; ++v) rel[v] = cost[v] - ref;

    // Step size per child: kappa * eta / w.
    std::vector<double> rate(k);
    for (std::size_t v = 0; v < k; ++v) rate[v] = pot.kappa * pot.eta[v] / pot.weight[v];

    const auto unconstrained = [&](std::size_t v, double beta) {
        return (q_prev[v] + pot.delta[v]) * std::exp(rate[v] * (beta - rel[v])) - pot.delta[v];
    };
    const auto total = [&](double beta) {
        double s = 0.0;
        for (std::size_t v = 0; v < k; ++v) s += std::max(0.0, unconstrained(v, beta));
        return s;
    };

    // At beta_lo every child is clipped to zero; at beta_hi some child alone reaches mass 1. The
    // exponents stay bounded on [beta_lo, beta_hi], so no overflow.
    double lo = std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < k; ++v) {
        const double base = q_prev[v] + pot.delta[v];
        lo = std::min(lo, rel[v] + std::log(pot.delta[v] / base) / rate[v]);
        hi = std::min(hi, rel[v] + std::log((1.0 + pot.delta[v]) / base) / rate[v]);
    }

    VertexUpdate out;
    int it = 0;
    for (; it < options.max_iterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (total(mid) < 1.0) lo = mid;
        else hi = mid;
    }
    out.iterations = it;
    // Pick whichever bracket end lands closer to the simplex.
    const double s_lo = total(lo);
    const double s_hi = total(hi);
    out.beta = std::abs(s_lo - 1.0) <= std::abs(s_hi - 1.0) ? lo : hi;

    out.q.resize(k);
    out.alpha.assign(k, 0.0);
    double sum = 0.0;
    for (std::size_t v = 0; v < k; ++v) {
        const double raw = unconstrained(v, out.beta);
        if (raw < 0.0) {
            // alpha_v lifts the unconstrained value exactly to zero.
            out.alpha[v] = rel[v] - out.beta + std::log(pot.delta[v] / (q_prev[v] + pot.delta[v])) / rate[v];
            out.q[v] = 0.0;
        } else {
            out.q[v] = raw;
        }
        sum += out.q[v];
    }
    out.simplex_residual = std::abs(sum - 1.0);
    if (out.simplex_residual > options.simplex_tol)
        throw SolverError("mirror-descent vertex update did not reach the simplex", out.simplex_residual);

    for (std::size_t v = 0; v < k; ++v) {
        if (out.q[v] < 0.0 && out.q[v] >= -1e-10) out.q[v] = 0.0;
        out.slackness_residual = std::max(out.slackness_residual, out.alpha[v] * out.q[v]);
    }
    if (out.slackness_residual > options.slackness_tol)
        throw SolverError("complementary slackness violated", out.slackness_residual);
    for (double& x : out.q) x /= sum;
    out.beta += ref;
    return out;
}

MdStepResult md_step(const HstTree& tree, double kappa, const CondState& q_prev, std::span<const double> leaf_costs,
                     const MdSolverOptions& options, const std::function<void(const MdTraceRow&)>& trace) {
    if (leaf_costs.size() != tree.num_points()) throw DomainError("leaf cost vector size does not match the tree");
    if (q_prev.q.size() != tree.size()) throw DomainError("conditional state size does not match the tree");

    MdStepResult out{q_prev, VertexCosts{std::vector<double>(tree.size(), 0.0)}};
    auto& q = out.q.q;
    auto& cost = out.costs.cost;
    for (std::size_t p = 0; p < leaf_costs.size(); ++p) {
        if (!std::isfinite(leaf_costs[p])) throw InputError("non-finite leaf cost");
        cost[static_cast<std::size_t>(tree.leaf_of(p))] = leaf_costs[p];
    }

    std::vector<double> q_children;
    std::vector<double> c_children;
    for (VertexId u : tree.bottom_up_internal_order()) {
        const auto& kids = tree.children(u);
        q_children.clear();
        c_children.clear();
        for (VertexId c : kids) {
            q_children.push_back(q_prev.q[static_cast<std::size_t>(c)]);
            c_children.push_back(cost[static_cast<std::size_t>(c)]);
        }
        const auto pot = ChildPotential::at(tree, u, kappa);
        const auto upd = md_update_vertex(pot, q_children, c_children, options);
        double avg = 0.0;
        for (std::size_t i = 0; i < kids.size(); ++i) {
            const auto c = static_cast<std::size_t>(kids[i]);
            q[c] = upd.q[i];
            avg += upd.q[i] * c_children[i];
            if (trace) trace(MdTraceRow{u, kids[i], q_children[i], upd.q[i], c_children[i]});
        }
        cost[static_cast<std::size_t>(u)] = avg;
    }
    return out;
}

TreeState delta_map(const HstTree& tree, const CondState& q) {
    if (q.q.size() != tree.size()) throw DomainError("conditional state size does not match the tree");
    TreeState z{std::vector<double>(tree.size(), 0.0)};
    z.z[0] = 1.0;
    // Breadth-first ids: a parent is always finalized before its children.
    for (std::size_t v = 1; v < tree.size(); ++v)
        z.z[v] = z.z[static_cast<std::size_t>(tree.parent(static_cast<VertexId>(v)))] * q.q[v];
    return z;
}

CondState delta_inverse(const HstTree& tree, const TreeState& z) {
    if (z.z.size() != tree.size()) throw DomainError("state size does not match the tree");
    CondState q{std::vector<double>(tree.size(), 0.0)};
    q.q[0] = 1.0;
    for (std::size_t u = 0; u < tree.size(); ++u) {
        const auto& kids = tree.children(static_cast<VertexId>(u));
        if (kids.empty()) continue;
        const double zu = z.z[u];
        for (VertexId c : kids) {
            q.q[static_cast<std::size_t>(c)] =
                zu > 0.0 ? z.z[static_cast<std::size_t>(c)] / zu : 1.0 / static_cast<double>(kids.size());
        }
    }
    return q;
}

TreeState point_mass_state(const HstTree& tree, std::size_t point) {
    TreeState z{std::vector<double>(tree.size(), 0.0)};
    for (VertexId v = tree.leaf_of(point); v != kNoVertex; v = tree.parent(v)) z.z[static_cast<std::size_t>(v)] = 1.0;
    return z;
}

std::vector<double> leaf_distribution(const HstTree& tree, const TreeState& z) {
    if (z.z.size() != tree.size()) throw DomainError("state size does not match the tree");
    std::vector<double> out(tree.num_points());
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = z.z[static_cast<std::size_t>(tree.leaf_of(p))];
    return out;
}

TreeState lift(const HstTree& tree, std::span<const double> leaf_probs) {
    if (leaf_probs.size() != tree.num_points()) throw DomainError("leaf distribution size does not match the tree");
    TreeState z{std::vector<double>(tree.size(), 0.0)};
    for (std::size_t p = 0; p < leaf_probs.size(); ++p) z.z[static_cast<std::size_t>(tree.leaf_of(p))] = leaf_probs[p];
    for (std::size_t v = tree.size(); v-- > 1;)
        z.z[static_cast<std::size_t>(tree.parent(static_cast<VertexId>(v)))] += z.z[v];
    return z;
}

std::vector<double> child_distribution(const HstTree& tree, const CondState& q, VertexId u) {
    std::vector<double> out;
    for (VertexId c : tree.children(u)) out.push_back(q.q[static_cast<std::size_t>(c)]);
    return out;
}

} // namespace gpmd
