#pragma once

#include <span>
#include <vector>

#include "gpmd/metric_hst.hpp"
#include "gpmd/rng.hpp"

namespace gpmd {

struct CouplingEntry {
    std::size_t from;
    std::size_t to;
    double mass;
};

/// Sparse joint distribution over (previous, next) action pairs.
struct Coupling {
    std::size_t num_points = 0;
    std::vector<CouplingEntry> entries;

    std::vector<double> row_marginals() const;
    std::vector<double> col_marginals() const;
    /// Expected d_T(U_prev, U_next).
    double tree_cost(const HstTree& tree) const;
    /// Expected d(U_prev, U_next) under an arbitrary metric on the same points.
    double metric_cost(const FiniteMetric& metric) const;
};

/// Wasserstein-1 distance under d_T via sum_u w_u |z_u - z'_u| on the lifted states.
/// Distributions are indexed by metric point; DomainError on size mismatch.
double tree_wasserstein(const HstTree& tree, std::span<const double> a, std::span<const double> b);

/// A minimal-d_T coupling of a and b built bottom-up: mass that can stay in place stays, and the
/// remaining surplus of each subtree is matched against deficits at the lowest common ancestor.
Coupling optimal_coupling(const HstTree& tree, std::span<const double> a, std::span<const double> b);

/// Draws the next action from the coupling row of `prev`. When that row carries no mass the draw
/// falls back to the next marginal.
std::size_t sample_next(const Coupling& coupling, std::size_t prev, Rng& rng);

/// Inverse-CDF draw from a discrete distribution (need not be normalized).
std::size_t sample_discrete(std::span<const double> probs, Rng& rng);

} // namespace gpmd
