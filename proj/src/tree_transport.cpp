#include "gpmd/tree_transport.hpp"

#include <algorithm>
#include <cmath>

#include "gpmd/errors.hpp"
#include "gpmd/mts_md.hpp"

namespace gpmd {

std::vector<double> Coupling::row_marginals() const {
    std::vector<double> out(num_points, 0.0);
    for (const auto& e : entries) out[e.from] += e.mass;
    return out;
}

std::vector<double> Coupling::col_marginals() const {
    std::vector<double> out(num_points, 0.0);
    for (const auto& e : entries) out[e.to] += e.mass;
    return out;
}

double Coupling::tree_cost(const HstTree& tree) const {
    double total = 0.0;
    for (const auto& e : entries)
        if (e.from != e.to) total += e.mass * tree.distance(e.from, e.to);
    return total;
}

double Coupling::metric_cost(const FiniteMetric& metric) const {
    double total = 0.0;
    for (const auto& e : entries) total += e.mass * metric(e.from, e.to);
    return total;
}

double tree_wasserstein(const HstTree& tree, std::span<const double> a, std::span<const double> b) {
    if (a.size() != tree.num_points() || b.size() != tree.num_points())
        throw DomainError("distribution does not belong to this tree");
    const auto za = lift(tree, a);
    const auto zb = lift(tree, b);
    double total = 0.0;
    for (std::size_t v = 1; v < tree.size(); ++v) total += tree.weight(static_cast<VertexId>(v)) * std::abs(za.z[v] - zb.z[v]);
    return total;
}

namespace {

struct Pending {
    std::size_t point;
    double mass;
};

// Moves matched mass between the surplus and deficit lists of one subtree.
void match(std::vector<Pending>& surplus, std::vector<Pending>& deficit, std::vector<CouplingEntry>& out) {
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < surplus.size() && j < deficit.size()) {
        const double m = std::min(surplus[i].mass, deficit[j].mass);
        if (m > 0.0) out.push_back({surplus[i].point, deficit[j].point, m});
        surplus[i].mass -= m;
        deficit[j].mass -= m;
        if (surplus[i].mass <= 0.0) ++i;
        if (deficit[j].mass <= 0.0) ++j;
    }
    surplus.erase(surplus.begin(), surplus.begin() + static_cast<std::ptrdiff_t>(i));
    deficit.erase(deficit.begin(), deficit.begin() + static_cast<std::ptrdiff_t>(j));
}

} // namespace

Coupling optimal_coupling(const HstTree& tree, std::span<const double> a, std::span<const double> b) {
    if (a.size() != tree.num_points() || b.size() != tree.num_points())
        throw DomainError("distribution does not belong to this tree");
    Coupling out;
    out.num_points = tree.num_points();

    std::vector<std::vector<Pending>> surplus(tree.size());
    std::vector<std::vector<Pending>> deficit(tree.size());
    for (std::size_t p = 0; p < tree.num_points(); ++p) {
        const auto leaf = static_cast<std::size_t>(tree.leaf_of(p));
        const double stay = std::min(a[p], b[p]);
        if (stay > 0.0) out.entries.push_back({p, p, stay});
        if (a[p] > stay) surplus[leaf].push_back({p, a[p] - stay});
        if (b[p] > stay) deficit[leaf].push_back({p, b[p] - stay});
    }
    // Children carry larger ids than parents, so a reverse sweep is bottom-up.
    for (std::size_t v = tree.size(); v-- > 0;) {
        const auto& kids = tree.children(static_cast<VertexId>(v));
        for (VertexId c : kids) {
            auto& sc = surplus[static_cast<std::size_t>(c)];
            auto& dc = deficit[static_cast<std::size_t>(c)];
            surplus[v].insert(surplus[v].end(), sc.begin(), sc.end());
            deficit[v].insert(deficit[v].end(), dc.begin(), dc.end());
            sc.clear();
            sc.shrink_to_fit();
            dc.clear();
            dc.shrink_to_fit();
        }
        if (!kids.empty()) match(surplus[v], deficit[v], out.entries);
    }
    // Rounding leftovers at the root (inputs sum to 1 only within tolerance) are dropped.
    return out;
}

std::size_t sample_discrete(std::span<const double> probs, Rng& rng) {
    double total = 0.0;
    for (double p : probs) total += std::max(0.0, p);
    if (!(total > 0.0)) throw DomainError("cannot sample from a zero-mass distribution");
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last = i;
        if (u < acc) return i;
    }
    return last;
}

std::size_t sample_next(const Coupling& coupling, std::size_t prev, Rng& rng) {
    if (prev >= coupling.num_points) throw DomainError("unknown previous action " + std::to_string(prev));
    std::vector<double> row(coupling.num_points, 0.0);
    double mass = 0.0;
    for (const auto& e : coupling.entries) {
        if (e.from == prev) {
            row[e.to] += e.mass;
            mass += e.mass;
        }
    }
    if (mass > 0.0) return sample_discrete(row, rng);
    return sample_discrete(coupling.col_marginals(), rng);
}

} // namespace gpmd
