#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace gpmd {

enum class Norm { Euclidean, Manhattan, Chebyshev };

Norm parse_norm(const std::string& name);

/// A finite metric space (X, d): n labelled points, optional coordinates, and the distance matrix.
class FiniteMetric {
public:
    /// Validates symmetry, zero diagonal, non-negativity and the triangle inequality
    /// (absolute tolerance kTriangleTolerance).
    explicit FiniteMetric(Eigen::MatrixXd dist, std::vector<std::string> labels = {});

    static FiniteMetric from_points(const Eigen::MatrixXd& coords, Norm norm = Norm::Euclidean,
                                    std::vector<std::string> labels = {});

    enum class CsvLayout { Auto, Matrix, Points };

    /// Rows of numbers, optionally with a header line and/or a leading label column. `Matrix`
    /// reads an explicit n x n distance matrix; `Points` reads one coordinate vector per row and
    /// applies `norm`. `Auto` picks Matrix when the block is square with a zero diagonal and
    /// symmetric, Points otherwise.
    static FiniteMetric load_csv(const std::filesystem::path& path, Norm norm = Norm::Euclidean,
                                 CsvLayout layout = CsvLayout::Auto);

    std::size_t size() const { return static_cast<std::size_t>(dist_.rows()); }
    double operator()(std::size_t i, std::size_t j) const { return dist_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
    const Eigen::MatrixXd& matrix() const { return dist_; }
    double diameter() const { return diameter_; }
    /// Mean of d over ordered pairs i != j (0 for n = 1).
    double mean_pairwise() const;
    const std::vector<std::string>& labels() const { return labels_; }
    bool has_coords() const { return coords_.size() > 0; }
    const Eigen::MatrixXd& coords() const { return coords_; }

    static constexpr double kTriangleTolerance = 1e-9;

private:
    Eigen::MatrixXd dist_;
    Eigen::MatrixXd coords_;
    std::vector<std::string> labels_;
    double diameter_ = 0.0;
};

using VertexId = std::int32_t;
inline constexpr VertexId kNoVertex = -1;

struct HstVertex {
    VertexId parent = kNoVertex;
    std::vector<VertexId> children;
    /// Weight of the edge to the parent; unused at the root.
    double weight = 0.0;
    /// Metric point index for leaves, -1 for internal vertices.
    std::int32_t point = -1;
};

/// theta_u = |L(u)| / |L(par(u))|, eta_u = 1 + log(1/theta_u), delta_u = theta_u / eta_u.
struct LeafRatios {
    double theta;
    double eta;
    double delta;
};

/// Rooted weighted tree whose leaves are the points of a finite metric.
///
/// Vertex ids are assigned in breadth-first order from the root (id 0), so parents always carry
/// smaller ids than their children.
class HstTree {
public:
    /// Takes an arbitrary vertex list (parent links + children lists) and renumbers it into
    /// breadth-first order. Throws ParameterError if the structure is not a tree over exactly the
    /// points 0..n-1, if tau <= 1, or if some edge below the root's children violates
    /// w_u <= w_parent / tau.
    HstTree(std::vector<HstVertex> vertices, VertexId root, double tau);

    VertexId root() const { return 0; }
    std::size_t size() const { return vertices_.size(); }
    std::size_t num_points() const { return leaf_of_point_.size(); }
    double tau() const { return tau_; }

    const HstVertex& vertex(VertexId v) const;
    VertexId parent(VertexId v) const { return vertex(v).parent; }
    const std::vector<VertexId>& children(VertexId v) const { return vertex(v).children; }
    double weight(VertexId v) const { return vertex(v).weight; }
    bool is_leaf(VertexId v) const { return vertex(v).children.empty(); }
    std::size_t depth(VertexId v) const { return depth_.at(static_cast<std::size_t>(v)); }
    std::size_t leaf_count(VertexId v) const { return leaf_count_.at(static_cast<std::size_t>(v)); }

    /// Leaf vertex holding metric point `point`; DomainError when out of range.
    VertexId leaf_of(std::size_t point) const;
    /// Metric point held by a leaf vertex; DomainError for internal vertices.
    std::size_t point_of(VertexId leaf) const;

    /// Sum of child-side edge weights along the unique path between the leaves of points a and b.
    double distance(std::size_t a, std::size_t b) const;

    /// DomainError for the root.
    LeafRatios leaf_ratios(VertexId u) const;

    /// Internal vertices with every child before its parent: deepest layer first, left to right.
    std::vector<VertexId> bottom_up_internal_order() const;

    /// Does the tau-HST decay w_u <= w_parent / tau hold on every edge below the root's children?
    bool satisfies_decay(double rel_tol = 1e-12) const;

    nlohmann::json to_json() const;
    std::string to_text() const;

private:
    std::vector<HstVertex> vertices_;
    std::vector<VertexId> leaf_of_point_;
    std::vector<std::size_t> depth_;
    std::vector<std::size_t> leaf_count_;
    double tau_;
};

/// Randomized FRT embedding with base tau. Deterministic in (metric, tau, seed). Zero-distance
/// points share one cluster vertex and hang below it on zero-weight edges.
HstTree frt_embed(const FiniteMetric& metric, double tau, std::uint64_t seed);

} // namespace gpmd
