#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gpmd/errors.hpp"
#include "gpmd/metric_hst.hpp"
#include "support.hpp"

using namespace gpmd;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
    const auto p = std::filesystem::temp_directory_path() / ("gpmd_test_" + name);
    std::ofstream(p) << body;
    return p;
}

FiniteMetric random_plane(Rng& rng, std::size_t n) {
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) << uniform01(rng), uniform01(rng);
    return FiniteMetric::from_points(pts);
}

} // namespace

TEST_CASE("finite metric validation") {
    Eigen::MatrixXd d(3, 3);
    d << 0, 1, 2, 1, 0, 1, 2, 1, 0;
    FiniteMetric m(d);
    CHECK(m.size() == 3);
    CHECK(m.diameter() == 2.0);
    CHECK(m.mean_pairwise() == doctest::Approx(8.0 / 6.0));

    Eigen::MatrixXd asym = d;
    asym(0, 1) = 1.5;
    CHECK_THROWS_AS(FiniteMetric{asym}, ParameterError);
    Eigen::MatrixXd diag = d;
    diag(1, 1) = 0.1;
    CHECK_THROWS_AS(FiniteMetric{diag}, ParameterError);
    Eigen::MatrixXd tri(3, 3);
    tri << 0, 1, 5, 1, 0, 1, 5, 1, 0;
    CHECK_THROWS_AS(FiniteMetric{tri}, ParameterError);
    Eigen::MatrixXd neg = d;
    neg(0, 2) = neg(2, 0) = -1;
    CHECK_THROWS_AS(FiniteMetric{neg}, ParameterError);
}

TEST_CASE("from_points norms") {
    Eigen::MatrixXd p(2, 2);
    p << 0, 0, 3, 4;
    CHECK(FiniteMetric::from_points(p)(0, 1) == doctest::Approx(5.0));
    CHECK(FiniteMetric::from_points(p, Norm::Manhattan)(0, 1) == doctest::Approx(7.0));
    CHECK(FiniteMetric::from_points(p, Norm::Chebyshev)(0, 1) == doctest::Approx(4.0));
    CHECK(parse_norm("manhattan") == Norm::Manhattan);
    CHECK_THROWS_AS(parse_norm("l7"), ParameterError);
}

TEST_CASE("metric csv loading") {
    const auto mat = write_temp("mat.csv", "a,b,c\n0,1,2\n1,0,1\n2,1,0\n");
    const auto m = FiniteMetric::load_csv(mat);
    CHECK(m.size() == 3);
    CHECK(m(0, 2) == 2.0);

    const auto pts = write_temp("pts.csv", "label,x,y\np,0,0\nq,3,4\n");
    const auto mp = FiniteMetric::load_csv(pts);
    CHECK(mp.size() == 2);
    CHECK(mp(0, 1) == doctest::Approx(5.0));
    CHECK(mp.labels()[1] == "q");

    const auto bad = write_temp("bad.csv", "x,y\n0,0\n1,oops\n");
    try {
        FiniteMetric::load_csv(bad);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(FiniteMetric::load_csv("/nonexistent/metric.csv"), InputError);
}

TEST_CASE("tree construction and renumbering") {
    // Children listed before parents in the input; ids come back breadth-first.
    std::vector<HstVertex> v(5);
    v[4] = {kNoVertex, {2, 3}, 0.0, -1};
    v[2] = {4, {0, 1}, 4.0, -1};
    v[3] = {4, {}, 4.0, 2};
    v[0] = {2, {}, 1.0, 0};
    v[1] = {2, {}, 1.0, 1};
    HstTree t(v, 4, 2.0);
    CHECK(t.size() == 5);
    CHECK(t.num_points() == 3);
    for (VertexId u = 1; u < 5; ++u) CHECK(t.parent(u) < u);
    CHECK(t.distance(0, 1) == 2.0);
    CHECK(t.distance(0, 2) == 9.0);
    CHECK(t.distance(2, 0) == 9.0);
    CHECK(t.distance(1, 1) == 0.0);
    CHECK_THROWS_AS(t.distance(0, 3), DomainError);
    CHECK_THROWS_AS(t.point_of(t.root()), DomainError);

    CHECK_THROWS_AS(HstTree(v, 4, 1.0), ParameterError);
    auto heavy = v;
    heavy[0].weight = 3.0; // 3 > 4 / 2
    CHECK_THROWS_AS(HstTree(heavy, 4, 2.0), ParameterError);
    auto dup = v;
    dup[1].point = 0;
    CHECK_THROWS_AS(HstTree(dup, 4, 2.0), ParameterError);
}

TEST_CASE("leaf ratio examples") {
    const HstTree t = testsupport::binary_tree(2, 2.0, 4.0);
    // Depth-1 vertex: two of four leaves.
    const auto r = t.leaf_ratios(1);
    CHECK(r.theta == doctest::Approx(0.5));
    CHECK(r.eta == doctest::Approx(1.0 + std::log(2.0)));
    CHECK(r.eta == doctest::Approx(1.6931).epsilon(1e-4));
    CHECK(r.delta == doctest::Approx(0.2953).epsilon(1e-3));
    CHECK_THROWS_AS(t.leaf_ratios(t.root()), DomainError);

    // One leaf under a parent with four: root -> {leaf, internal(3 leaves)}.
    std::vector<HstVertex> v(6);
    v[0] = {kNoVertex, {1, 2}, 0.0, -1};
    v[1] = {0, {}, 1.0, 0};
    v[2] = {0, {3, 4, 5}, 1.0, -1};
    v[3] = {2, {}, 0.5, 1};
    v[4] = {2, {}, 0.5, 2};
    v[5] = {2, {}, 0.5, 3};
    HstTree u(v, 0, 2.0);
    const auto q = u.leaf_ratios(1);
    CHECK(q.theta == doctest::Approx(0.25));
    CHECK(q.eta == doctest::Approx(1.0 + std::log(4.0)));
    CHECK(q.delta == doctest::Approx(0.25 / (1.0 + std::log(4.0))));

    // Only child: theta = eta = delta = 1.
    std::vector<HstVertex> c(3);
    c[0] = {kNoVertex, {1}, 0.0, -1};
    c[1] = {0, {2}, 2.0, -1};
    c[2] = {1, {}, 1.0, 0};
    HstTree only(c, 0, 2.0);
    const auto o = only.leaf_ratios(1);
    CHECK(o.theta == 1.0);
    CHECK(o.eta == 1.0);
    CHECK(o.delta == 1.0);
}

TEST_CASE("bottom-up order is deepest layer first, left to right") {
    const HstTree t = testsupport::binary_tree(3, 2.0, 4.0);
    const auto order = t.bottom_up_internal_order();
    REQUIRE(order.size() == 7);
    CHECK(order == std::vector<VertexId>{3, 4, 5, 6, 1, 2, 0});
    std::vector<bool> seen(t.size(), false);
    for (VertexId u : order) {
        for (VertexId c : t.children(u))
            if (!t.is_leaf(c)) CHECK(seen[static_cast<std::size_t>(c)]);
        seen[static_cast<std::size_t>(u)] = true;
    }
}

TEST_CASE("frt small cases") {
    Eigen::MatrixXd one = Eigen::MatrixXd::Zero(1, 1);
    const auto t1 = frt_embed(FiniteMetric(one), 2.0, 7);
    CHECK(t1.num_points() == 1);
    CHECK(t1.distance(0, 0) == 0.0);

    Eigen::MatrixXd two(2, 2);
    two << 0, 3.5, 3.5, 0;
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(frt_embed(FiniteMetric(two), 2.0, s).distance(0, 1) >= 3.5);

    CHECK_THROWS_AS(frt_embed(FiniteMetric(two), 1.0, 1), ParameterError);

    // All-zero metric: every leaf at distance 0.
    const auto tz = frt_embed(FiniteMetric(Eigen::MatrixXd::Zero(3, 3)), 2.0, 1);
    CHECK(tz.num_points() == 3);
    CHECK(tz.distance(0, 2) == 0.0);
}

TEST_CASE("frt dominance, decay and determinism") {
    Rng rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        const auto m = random_plane(rng, 12);
        for (double tau : {2.0, 5.0}) {
            const auto t = frt_embed(m, tau, static_cast<std::uint64_t>(rep));
            CHECK(t.satisfies_decay());
            CHECK(t.num_points() == 12);
            for (std::size_t i = 0; i < 12; ++i)
                for (std::size_t j = 0; j < 12; ++j) CHECK(t.distance(i, j) >= m(i, j) - 1e-12);
            const auto again = frt_embed(m, tau, static_cast<std::uint64_t>(rep));
            CHECK(again.to_json() == t.to_json());
        }
    }
}

TEST_CASE("frt with duplicate points") {
    Eigen::MatrixXd p(4, 1);
    p << 0, 0, 1, 3;
    const auto m = FiniteMetric::from_points(p);
    const auto t = frt_embed(m, 2.0, 3);
    CHECK(t.distance(0, 1) == 0.0);
    CHECK(t.distance(0, 2) >= 1.0);
    CHECK(t.distance(1, 3) >= 3.0);
}
