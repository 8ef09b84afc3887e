#include "gpmd/metric_hst.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "gpmd/csv.hpp"
#include "gpmd/errors.hpp"
#include "gpmd/rng.hpp"

namespace gpmd {

Norm parse_norm(const std::string& name) {
    if (name == "euclidean" || name == "l2") return Norm::Euclidean;
    if (name == "manhattan" || name == "l1") return Norm::Manhattan;
    if (name == "chebyshev" || name == "linf") return Norm::Chebyshev;
    throw ParameterError("unknown norm '" + name + "'");
}

// ---------------------------------------------------------------------------------------------
// FiniteMetric

FiniteMetric::FiniteMetric(Eigen::MatrixXd dist, std::vector<std::string> labels)
    : dist_(std::move(dist)), labels_(std::move(labels)) {
    const Eigen::Index n = dist_.rows();
    if (n < 1) throw ParameterError("metric needs at least one point");
    if (dist_.cols() != n) throw ParameterError("distance matrix must be square");
    if (!dist_.allFinite()) throw ParameterError("distance matrix has non-finite entries");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (dist_(i, i) != 0.0) throw ParameterError("distance matrix diagonal must be zero");
        for (Eigen::Index j = 0; j < n; ++j) {
            if (dist_(i, j) < 0.0) throw ParameterError("negative distance");
            if (dist_(i, j) != dist_(j, i)) throw ParameterError("distance matrix is not symmetric");
        }
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                if (dist_(i, j) > dist_(i, k) + dist_(k, j) + kTriangleTolerance) {
                    std::ostringstream os;
                    os << "triangle inequality violated: d(" << i << "," << j << ") > d(" << i << "," << k
                       << ") + d(" << k << "," << j << ")";
                    throw ParameterError(os.str());
                }
            }
        }
    }
    diameter_ = dist_.maxCoeff();
    if (labels_.empty()) {
        labels_.reserve(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) labels_.push_back(std::to_string(i));
    }
    if (labels_.size() != static_cast<std::size_t>(n)) throw ParameterError("label count does not match metric size");
}

FiniteMetric FiniteMetric::from_points(const Eigen::MatrixXd& coords, Norm norm, std::vector<std::string> labels) {
    const Eigen::Index n = coords.rows();
    Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Eigen::VectorXd diff = coords.row(i) - coords.row(j);
            double d = 0.0;
            switch (norm) {
            case Norm::Euclidean: d = diff.norm(); break;
            case Norm::Manhattan: d = diff.cwiseAbs().sum(); break;
            case Norm::Chebyshev: d = diff.size() ? diff.cwiseAbs().maxCoeff() : 0.0; break;
            }
            dist(i, j) = dist(j, i) = d;
        }
    }
    FiniteMetric m(std::move(dist), std::move(labels));
    m.coords_ = coords;
    return m;
}

FiniteMetric FiniteMetric::load_csv(const std::filesystem::path& path, Norm norm, CsvLayout layout) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open metric file " + path.string());

    std::vector<std::string> labels;
    std::vector<std::vector<double>> rows;
    bool labelled = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        auto cells = csv::split_line(line);
        std::vector<double> values;
        bool all_numeric = true;
        for (const auto& c : cells) {
            if (!csv::parse_double(c)) { all_numeric = false; break; }
        }
        if (rows.empty() && labels.empty() && !all_numeric) {
            // Header if the row has no numeric data cell after an optional label.
            bool rest_numeric = cells.size() > 1;
            for (std::size_t i = 1; i < cells.size() && rest_numeric; ++i) rest_numeric = csv::parse_double(cells[i]).has_value();
            if (!rest_numeric) continue;
        }
        std::size_t first = 0;
        if (!csv::parse_double(cells.front())) {
            labelled = true;
            labels.push_back(cells.front());
            first = 1;
        } else if (labelled) {
            throw InputError("line " + std::to_string(line_no) + ": missing label");
        }
        for (std::size_t i = first; i < cells.size(); ++i) {
            auto v = csv::parse_double(cells[i]);
            if (!v) throw InputError("line " + std::to_string(line_no) + ": non-numeric cell '" + cells[i] + "'");
            values.push_back(*v);
        }
        if (!rows.empty() && values.size() != rows.front().size())
            throw InputError("line " + std::to_string(line_no) + ": inconsistent column count");
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw InputError("metric file " + path.string() + " has no data rows");

    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = static_cast<Eigen::Index>(rows.front().size());
    Eigen::MatrixXd block(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) block(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

    if (layout == CsvLayout::Auto) {
        const bool square = n == m && block.diagonal().isZero(0.0) && block.isApprox(block.transpose(), 0.0);
        layout = square ? CsvLayout::Matrix : CsvLayout::Points;
    }
    if (layout == CsvLayout::Matrix) {
        if (n != m) throw InputError("distance matrix in " + path.string() + " is not square");
        return FiniteMetric(std::move(block), std::move(labels));
    }
    return from_points(block, norm, std::move(labels));
}

double FiniteMetric::mean_pairwise() const {
    const auto n = static_cast<double>(size());
    if (n < 2) return 0.0;
    return dist_.sum() / (n * (n - 1.0));
}

// ---------------------------------------------------------------------------------------------
// HstTree

HstTree::HstTree(std::vector<HstVertex> vertices, VertexId root, double tau) : tau_(tau) {
    if (!(tau > 1.0)) throw ParameterError("tau must exceed 1");
    const auto n_in = vertices.size();
    if (n_in == 0) throw ParameterError("tree has no vertices");
    if (root < 0 || static_cast<std::size_t>(root) >= n_in) throw ParameterError("root id out of range");
    if (vertices[static_cast<std::size_t>(root)].parent != kNoVertex) throw ParameterError("root must not have a parent");

    // Breadth-first renumbering; also checks reachability and parent/child consistency.
    std::vector<VertexId> new_id(n_in, kNoVertex);
    std::vector<VertexId> order;
    order.reserve(n_in);
    order.push_back(root);
    new_id[static_cast<std::size_t>(root)] = 0;
    for (std::size_t head = 0; head < order.size(); ++head) {
        const auto& v = vertices[static_cast<std::size_t>(order[head])];
        for (VertexId c : v.children) {
            if (c < 0 || static_cast<std::size_t>(c) >= n_in) throw ParameterError("child id out of range");
            if (new_id[static_cast<std::size_t>(c)] != kNoVertex) throw ParameterError("vertex reached twice; not a tree");
            if (vertices[static_cast<std::size_t>(c)].parent != order[head]) throw ParameterError("parent link disagrees with children list");
            new_id[static_cast<std::size_t>(c)] = static_cast<VertexId>(order.size());
            order.push_back(c);
        }
    }
    if (order.size() != n_in) throw ParameterError("tree has unreachable vertices");

    vertices_.resize(n_in);
    for (std::size_t k = 0; k < n_in; ++k) {
        const auto& old = vertices[static_cast<std::size_t>(order[k])];
        auto& v = vertices_[k];
        v.parent = old.parent == kNoVertex ? kNoVertex : new_id[static_cast<std::size_t>(old.parent)];
        v.weight = old.weight;
        v.point = old.point;
        v.children.reserve(old.children.size());
        for (VertexId c : old.children) v.children.push_back(new_id[static_cast<std::size_t>(c)]);
        if (!(v.weight >= 0.0) || !std::isfinite(v.weight)) throw ParameterError("vertex weights must be finite and non-negative");
    }

    // Leaves are exactly the points 0..n-1.
    std::size_t n_leaves = 0;
    for (const auto& v : vertices_) n_leaves += v.children.empty() ? 1 : 0;
    leaf_of_point_.assign(n_leaves, kNoVertex);
    for (std::size_t k = 0; k < n_in; ++k) {
        const auto& v = vertices_[k];
        if (v.children.empty()) {
            if (v.point < 0 || static_cast<std::size_t>(v.point) >= n_leaves)
                throw ParameterError("leaf without a valid point index");
            if (leaf_of_point_[static_cast<std::size_t>(v.point)] != kNoVertex) throw ParameterError("point assigned to two leaves");
            leaf_of_point_[static_cast<std::size_t>(v.point)] = static_cast<VertexId>(k);
        } else if (v.point != -1) {
            throw ParameterError("internal vertex carries a point index");
        }
    }

    depth_.assign(n_in, 0);
    for (std::size_t k = 1; k < n_in; ++k) depth_[k] = depth_[static_cast<std::size_t>(vertices_[k].parent)] + 1;
    leaf_count_.assign(n_in, 0);
    for (std::size_t k = n_in; k-- > 0;) {
        if (vertices_[k].children.empty()) leaf_count_[k] = 1;
        if (k > 0) leaf_count_[static_cast<std::size_t>(vertices_[k].parent)] += leaf_count_[k];
    }

    if (!satisfies_decay()) throw ParameterError("edge weights violate the tau-HST decay");
}

const HstVertex& HstTree::vertex(VertexId v) const {
    if (v < 0 || static_cast<std::size_t>(v) >= vertices_.size()) throw DomainError("vertex id " + std::to_string(v) + " out of range");
    return vertices_[static_cast<std::size_t>(v)];
}

VertexId HstTree::leaf_of(std::size_t point) const {
    if (point >= leaf_of_point_.size()) throw DomainError("unknown leaf " + std::to_string(point));
    return leaf_of_point_[point];
}

std::size_t HstTree::point_of(VertexId leaf) const {
    const auto& v = vertex(leaf);
    if (!v.children.empty()) throw DomainError("vertex " + std::to_string(leaf) + " is not a leaf");
    return static_cast<std::size_t>(v.point);
}

double HstTree::distance(std::size_t a, std::size_t b) const {
    VertexId u = leaf_of(a);
    VertexId v = leaf_of(b);
    double total = 0.0;
    while (u != v) {
        // Climb from the deeper side; ties climb both.
        const auto du = depth_[static_cast<std::size_t>(u)];
        const auto dv = depth_[static_cast<std::size_t>(v)];
        if (du >= dv) {
            total += vertices_[static_cast<std::size_t>(u)].weight;
            u = vertices_[static_cast<std::size_t>(u)].parent;
        }
        if (dv >= du) {
            total += vertices_[static_cast<std::size_t>(v)].weight;
            v = vertices_[static_cast<std::size_t>(v)].parent;
        }
    }
    return total;
}

LeafRatios HstTree::leaf_ratios(VertexId u) const {
    const auto& v = vertex(u);
    if (v.parent == kNoVertex) throw DomainError("leaf ratios are undefined at the root");
    const double theta = static_cast<double>(leaf_count_[static_cast<std::size_t>(u)]) /
                         static_cast<double>(leaf_count_[static_cast<std::size_t>(v.parent)]);
    const double eta = 1.0 + std::log(1.0 / theta);
    return {theta, eta, theta / eta};
}

std::vector<VertexId> HstTree::bottom_up_internal_order() const {
    // Deepest layer first, left to right within a layer (breadth-first ids ascend left to right).
    std::vector<std::pair<int, VertexId>> keyed;
    for (std::size_t k = 0; k < vertices_.size(); ++k)
        if (!vertices_[k].children.empty()) keyed.emplace_back(-static_cast<int>(depth(static_cast<VertexId>(k))), static_cast<VertexId>(k));
    std::sort(keyed.begin(), keyed.end());
    std::vector<VertexId> out;
    out.reserve(keyed.size());
    for (const auto& kv : keyed) out.push_back(kv.second);
    return out;
}

bool HstTree::satisfies_decay(double rel_tol) const {
    for (std::size_t k = 1; k < vertices_.size(); ++k) {
        const auto p = static_cast<std::size_t>(vertices_[k].parent);
        if (p == 0) continue;
        const double bound = vertices_[p].weight / tau_;
        if (vertices_[k].weight > bound * (1.0 + rel_tol)) return false;
    }
    return true;
}

nlohmann::json HstTree::to_json() const {
    nlohmann::json verts = nlohmann::json::array();
    for (std::size_t k = 0; k < vertices_.size(); ++k) {
        const auto& v = vertices_[k];
        nlohmann::json j;
        j["id"] = k;
        j["parent"] = v.parent;
        j["weight"] = v.weight;
        j["leaf"] = v.point >= 0 ? nlohmann::json(v.point) : nlohmann::json(nullptr);
        verts.push_back(std::move(j));
    }
    return {{"tau", tau_}, {"root", 0}, {"vertices", std::move(verts)}};
}

std::string HstTree::to_text() const {
    std::ostringstream os;
    os << "id,parent,weight,leaf\n";
    for (std::size_t k = 0; k < vertices_.size(); ++k) {
        const auto& v = vertices_[k];
        os << k << ',' << v.parent << ',' << csv::format_double(v.weight) << ',';
        if (v.point >= 0) os << v.point;
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------------------------
// FRT

namespace {

struct Cluster {
    std::vector<std::size_t> members; // indices into the representative list
    VertexId vertex;
};

} // namespace

HstTree frt_embed(const FiniteMetric& metric, double tau, std::uint64_t seed) {
    if (!(tau > 1.0)) throw ParameterError("tau must exceed 1");
    const std::size_t n = metric.size();

    // Zero-distance classes; the representative is the lowest index.
    std::vector<std::size_t> reps;
    std::vector<std::vector<std::size_t>> members_of_rep;
    {
        std::vector<bool> taken(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            reps.push_back(i);
            members_of_rep.emplace_back();
            for (std::size_t j = i; j < n; ++j) {
                if (!taken[j] && metric(i, j) == 0.0) {
                    taken[j] = true;
                    members_of_rep.back().push_back(j);
                }
            }
        }
    }
    const std::size_t m = reps.size();

    std::vector<HstVertex> vertices;
    const auto new_vertex = [&vertices](VertexId parent, double weight) {
        vertices.push_back(HstVertex{parent, {}, weight, -1});
        const auto id = static_cast<VertexId>(vertices.size() - 1);
        if (parent != kNoVertex) vertices[static_cast<std::size_t>(parent)].children.push_back(id);
        return id;
    };
    // Turns a level-0 cluster vertex into either a leaf or a zero-weight fan-out.
    const auto attach_points = [&](VertexId v, std::size_t rep_index) {
        const auto& pts = members_of_rep[rep_index];
        if (pts.size() == 1) {
            vertices[static_cast<std::size_t>(v)].point = static_cast<std::int32_t>(pts.front());
            return;
        }
        for (std::size_t p : pts) {
            const VertexId leaf = new_vertex(v, 0.0);
            vertices[static_cast<std::size_t>(leaf)].point = static_cast<std::int32_t>(p);
        }
    };

    if (m == 1) {
        const VertexId root = new_vertex(kNoVertex, 0.0);
        attach_points(root, 0);
        return HstTree(std::move(vertices), root, tau);
    }

    Rng rng = make_stream(seed, Stream::Frt);
    // Random center priority over representatives.
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = m - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1));
        std::swap(perm[i], perm[std::min(j, i)]);
    }
    // beta has density proportional to 1/beta on [1, tau).
    const double beta = std::pow(tau, uniform01(rng));

    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) min_dist = std::min(min_dist, metric(reps[a], reps[b]));
    const double diameter = metric.diameter();

    // Level-i radius r_i = beta * tau^(i-1) * min_dist. r_0 < min_dist separates every
    // representative; the top level L is the first with r_L >= diameter.
    const auto radius = [&](int level) { return beta * std::pow(tau, level - 1) * min_dist; };
    int top = 1;
    while (radius(top) < diameter) ++top;

    const VertexId root = new_vertex(kNoVertex, 0.0);
    std::vector<Cluster> current{{std::vector<std::size_t>(m), root}};
    std::iota(current.front().members.begin(), current.front().members.end(), 0);

    for (int level = top - 1; level >= 0; --level) {
        const double r = radius(level);
        // Edge from a level-i cluster to its parent weighs tau * r_i, which keeps d_T >= d.
        const double w = beta * std::pow(tau, level) * min_dist;
        std::vector<Cluster> next;
        for (const auto& parent : current) {
            // Assign each member to the first center (in priority order) within radius r.
            std::vector<std::pair<std::size_t, std::size_t>> assigned; // (priority rank, member)
            assigned.reserve(parent.members.size());
            for (std::size_t x : parent.members) {
                std::size_t rank = 0;
                for (; rank < m; ++rank)
                    if (metric(reps[perm[rank]], reps[x]) <= r) break;
                assigned.emplace_back(rank, x);
            }
            std::stable_sort(assigned.begin(), assigned.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t k = 0; k < assigned.size();) {
                Cluster child{{}, new_vertex(parent.vertex, w)};
                const auto rank = assigned[k].first;
                for (; k < assigned.size() && assigned[k].first == rank; ++k) child.members.push_back(assigned[k].second);
                next.push_back(std::move(child));
            }
        }
        current = std::move(next);
    }
    for (const auto& c : current) attach_points(c.vertex, c.members.front());
    return HstTree(std::move(vertices), root, tau);
}

} // namespace gpmd
