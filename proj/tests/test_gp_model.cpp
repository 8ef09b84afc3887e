#include <doctest.h>

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "gpmd/errors.hpp"
#include "gpmd/gp_model.hpp"
#include "gpmd/rng.hpp"

using namespace gpmd;

namespace {

Eigen::VectorXd v1(double x) { return Eigen::VectorXd::Constant(1, x); }

Kernel se(double l, double s = 1.0) { return Kernel::squared_exponential(Eigen::VectorXd::Constant(1, l), s); }

} // namespace

TEST_CASE("kernels") {
    Eigen::VectorXd x(2), y(2);
    x << 0.0, 1.0;
    y << 1.0, 1.0;
    CHECK(se(1.0, 2.0)(x, y) == doctest::Approx(2.0 * std::exp(-0.5)));
    Eigen::VectorXd ls(2);
    ls << 2.0, 1.0;
    CHECK(Kernel::squared_exponential(ls, 1.0)(x, y) == doctest::Approx(std::exp(-0.125)));
    CHECK(Kernel::linear(3.0)(x, y) == doctest::Approx(3.0));
    CHECK(Kernel::sum(se(1.0), Kernel::linear(1.0))(x, y) == doctest::Approx(std::exp(-0.5) + 1.0));
    CHECK(Kernel::product(se(1.0), Kernel::linear(2.0))(x, y) == doctest::Approx(2.0 * std::exp(-0.5)));
    CHECK_THROWS_AS(se(0.0), ParameterError);
    CHECK_THROWS_AS(Kernel::linear(-1.0), ParameterError);

    InputTransform t{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, 2.0)};
    CHECK(se(1.0).with_transform(t)(x, y) == doctest::Approx(std::exp(-0.125)));

    Eigen::MatrixXd a(3, 2);
    a << 0, 0, 1, 0, 2, 2;
    const auto s = InputTransform::standardize(a);
    CHECK(s.offset(0) == doctest::Approx(1.0));
    CHECK(s.scale(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));

    const auto k = se(0.7, 1.3);
    const auto back = Kernel::from_json(k.to_json());
    CHECK(back(x, y) == doctest::Approx(k(x, y)));
    const auto g = k.cross(a, a);
    CHECK(g(0, 2) == doctest::Approx(k(a.row(0).transpose(), a.row(2).transpose())));
    CHECK(k.diag(a)(1) == doctest::Approx(1.3));
}

TEST_CASE("prior and single-point posterior") {
    const double lam = 0.5;
    GpModel gp(se(1.0, 2.0), GpHyper{lam, std::sqrt(lam), 1.0, 0.05}, 1);
    const auto p0 = gp.posterior(v1(0.3));
    CHECK(p0.mean == 0.0);
    CHECK(p0.stdev * p0.stdev == doctest::Approx(2.0));

    gp.append(v1(0.3), 1.5);
    const auto p1 = gp.posterior(v1(0.3));
    CHECK(p1.mean == doctest::Approx(2.0 * 1.5 / (2.0 + lam)).epsilon(1e-12));
    CHECK(p1.stdev * p1.stdev == doctest::Approx(2.0 - 4.0 / (2.0 + lam)).epsilon(1e-12));
}

TEST_CASE("two-point posterior closed form") {
    const double lam = 0.1;
    GpModel gp(se(1.0), GpHyper{lam, 1.0, 1.0, 0.05}, 1);
    gp.append(v1(0.0), 1.0);
    gp.append(v1(1.0), -1.0);
    const double r = std::exp(-0.5);
    Eigen::Matrix2d a;
    a << 1 + lam, r, r, 1 + lam;
    const Eigen::Vector2d y(1.0, -1.0);
    const double x = 0.4;
    const Eigen::Vector2d k(std::exp(-0.5 * x * x), std::exp(-0.5 * (x - 1) * (x - 1)));
    const Eigen::Vector2d sol = a.inverse() * y;
    const auto p = gp.posterior(v1(x));
    CHECK(p.mean == doctest::Approx(k.dot(sol)).epsilon(1e-12));
    CHECK(p.stdev * p.stdev == doctest::Approx(1.0 - k.dot(a.inverse() * k)).epsilon(1e-12));

    const double m = 0.7;
    const auto [mu, sd] = gp.posterior_batch(Eigen::MatrixXd::Constant(1, 1, x), m);
    CHECK(mu(0) == doctest::Approx(m + k.dot(a.inverse() * (y.array() - m).matrix())).epsilon(1e-12));
    CHECK(sd(0) == doctest::Approx(p.stdev));
}

TEST_CASE("lcb examples") {
    GpModel gp(se(1.0, 1.0), GpHyper{1e-6, 1e-3, 1.0, 0.05}, 1);
    CHECK(gp.lcb(v1(0.0), 0.0) == 0.0);
    CHECK(gp.lcb(v1(0.0), 2.0) == doctest::Approx(-2.0));
    for (int i = 0; i < 50; ++i) gp.append(v1(0.2), 0.8);
    const auto p = gp.posterior(v1(0.2));
    CHECK(p.stdev < 1e-3);
    CHECK(std::abs(gp.lcb(v1(0.2), 2.0) - 0.8) <= 2.0 * 2.0 * p.stdev + 1e-9);
}

TEST_CASE("information gain and beta") {
    const double lam = 0.25;
    GpModel gp(se(1.0), GpHyper{lam, std::sqrt(lam), 1.0, 1.0}, 1);
    CHECK(gp.info_gain() == 0.0);
    CHECK(gp.beta_t() == doctest::Approx(1.0));
    gp.append(v1(0.0), 0.0);
    CHECK(gp.info_gain() == doctest::Approx(0.5 * std::log(1.0 + 1.0 / lam)).epsilon(1e-12));
    gp.append(v1(0.0), 0.0);
    Eigen::Matrix2d m;
    m << 1 + 1 / lam, 1 / lam, 1 / lam, 1 + 1 / lam;
    CHECK(gp.info_gain() == doctest::Approx(0.5 * std::log(m.determinant())).epsilon(1e-12));

    GpModel fresh(se(1.0), GpHyper{lam, std::sqrt(lam), 1.0, std::exp(-2.0)}, 1);
    CHECK(fresh.beta_t() == doctest::Approx(3.0).epsilon(1e-12));

    BetaSchedule constant{BetaMode::Constant, 2.5};
    CHECK(constant.at(gp) == 2.5);
    BetaSchedule theory{BetaMode::Theory, 2.5};
    CHECK(theory.at(gp) == doctest::Approx(gp.beta_t()));
    CHECK(parse_beta_mode("theory") == BetaMode::Theory);
    CHECK_THROWS_AS(parse_beta_mode("loud"), ParameterError);
}

TEST_CASE("append validation and snapshots") {
    GpModel gp(se(1.0), GpHyper{}, 1);
    CHECK_THROWS_AS(gp.append(v1(0.0), std::numeric_limits<double>::quiet_NaN()), InputError);
    CHECK_THROWS_AS(gp.append(Eigen::VectorXd::Zero(2), 1.0), InputError);
    gp.append(std::vector<Observation>{});
    CHECK(gp.size() == 0);
    const auto next = gp.update({{v1(0.1), 1.0}, {v1(0.5), 2.0}});
    CHECK(gp.size() == 0);
    CHECK(next.size() == 2);
    // A batch with one bad entry leaves the model untouched.
    GpModel copy = next;
    CHECK_THROWS_AS(copy.append({{v1(0.2), 1.0}, {v1(0.3), std::numeric_limits<double>::infinity()}}), InputError);
    CHECK(copy.size() == 2);

    const auto restored = GpModel::from_json(next.to_json());
    CHECK(restored.size() == 2);
    CHECK(restored.posterior(v1(0.3)).mean == doctest::Approx(next.posterior(v1(0.3)).mean).epsilon(1e-12));
}

TEST_CASE("incremental factor survives refactorization cadence") {
    Rng rng(2);
    Eigen::VectorXd ls(2);
    ls << 0.3, 0.5;
    const Kernel k = Kernel::squared_exponential(ls, 1.5);
    const double lam = 0.05;
    GpModel gp(k, GpHyper{lam, std::sqrt(lam), 1.0, 0.05}, 2);
    const int n = 2 * static_cast<int>(GpModel::kRefactorEvery) + 37;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x.row(i) << uniform01(rng), uniform01(rng);
        y(i) = std::sin(4 * x(i, 0)) + standard_normal(rng) * 0.1;
        gp.append(x.row(i).transpose(), y(i));
    }
    Eigen::MatrixXd a = k.cross(x, x);
    a.diagonal().array() += lam;
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    Eigen::MatrixXd q(5, 2);
    for (int i = 0; i < 5; ++i) q.row(i) << uniform01(rng), uniform01(rng);
    const auto [mu, sd] = gp.posterior_batch(q);
    const Eigen::MatrixXd kq = k.cross(x, q);
    const Eigen::VectorXd mu_ref = kq.transpose() * llt.solve(y);
    for (int i = 0; i < 5; ++i) {
        CHECK(std::abs(mu(i) - mu_ref(i)) < 1e-8);
        const double var = k(q.row(i).transpose(), q.row(i).transpose()) - kq.col(i).dot(llt.solve(kq.col(i)));
        CHECK(std::abs(sd(i) * sd(i) - std::max(var, 0.0)) < 1e-8);
    }
}

TEST_CASE("pooled GP equals the full GP on replicated inputs") {
    Rng rng(8);
    Eigen::MatrixXd design(20, 2);
    for (int i = 0; i < 20; ++i) design.row(i) << uniform01(rng), uniform01(rng);
    const Kernel k = se(0.4, 1.7);
    const GpHyper h{0.3, std::sqrt(0.3), 1.0, 0.05};
    PooledGp pooled(k, h, design);
    GpModel full(k, h, 2);
    std::vector<std::size_t> all(20);
    for (std::size_t i = 0; i < 20; ++i) all[i] = i;

    const auto [m0, s0] = pooled.posterior(all, 1.0);
    CHECK(m0(3) == 1.0);
    CHECK(s0(3) == doctest::Approx(std::sqrt(1.7)));

    for (int t = 0; t < 400; ++t) {
        // Early on spread out, later hammer a few points.
        const std::size_t p = t < 60 ? rng() % 20 : rng() % 4;
        const double y = standard_normal(rng);
        pooled.observe(p, y);
        full.append(design.row(static_cast<Eigen::Index>(p)).transpose(), y);
        if (t % 40 == 0 || t == 399) {
            const auto [ma, sa] = pooled.posterior(all, 0.3);
            const auto [mb, sb] = full.posterior_batch(design, 0.3);
            CHECK((ma - mb).cwiseAbs().maxCoeff() < 1e-9);
            CHECK((sa - sb).cwiseAbs().maxCoeff() < 1e-9);
            CHECK(pooled.info_gain() == doctest::Approx(full.info_gain()).epsilon(1e-10));
            CHECK(pooled.beta_t() == doctest::Approx(full.beta_t()).epsilon(1e-10));
        }
    }
    CHECK(pooled.observations() == 400);
    CHECK(pooled.distinct() <= 20);
    CHECK_THROWS_AS(pooled.observe(20, 0.0), DomainError);
    CHECK_THROWS_AS(pooled.observe(0, std::numeric_limits<double>::quiet_NaN()), InputError);
}
