#include <doctest.h>

#include <cmath>
#include <limits>

#include "gpmd/bench_oracle.hpp"
#include "gpmd/errors.hpp"
#include "support.hpp"

using namespace gpmd;

namespace {

FiniteMetric line_metric(std::vector<double> xs) {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) p(static_cast<Eigen::Index>(i), 0) = xs[i];
    return FiniteMetric::from_points(p);
}

// Every sequence in lexicographic order; returns the first minimizer.
OfflineSolution brute_force(const FiniteMetric& d, const Eigen::MatrixXd& f, const std::vector<std::size_t>& ctx,
                            std::size_t x0) {
    const std::size_t n = d.size(), H = ctx.size();
    std::vector<std::size_t> seq(H, 0);
    OfflineSolution best;
    best.cost = std::numeric_limits<double>::infinity();
    while (true) {
        const double c = sequence_cost(d, f, ctx, x0, seq);
        if (c < best.cost) best = {seq, c};
        std::size_t i = H;
        while (i > 0 && ++seq[i - 1] == n) seq[--i] = 0;
        if (i == 0) break;
    }
    return best;
}

} // namespace

TEST_CASE("episode log totals") {
    EpisodeLog log(2);
    log.push({0, 1, 0.5, 2.0, 0.4});
    log.push({3, 1, 1.5, 0.0, 1.2});
    CHECK(log.x0() == 2);
    CHECK(log.service() == 2.0);
    CHECK(log.movement() == 2.0);
    CHECK(log.cost() == 4.0);
    CHECK(log.contexts() == std::vector<std::size_t>{0, 3});
}

TEST_CASE("offline optimum: single step and free movement") {
    const auto d = line_metric({0.0, 1.0, 3.0});
    Eigen::MatrixXd f(3, 2);
    f << 2.0, 0.0, 1.5, 5.0, 0.0, 1.0;
    const std::vector<std::size_t> one{0};
    const auto s = offline_optimal(d, f, one, 0);
    // argmin {2 + 0, 1.5 + 1, 0 + 3}
    CHECK(s.actions == std::vector<std::size_t>{0});
    CHECK(s.cost == 2.0);

    const FiniteMetric zero(Eigen::MatrixXd::Zero(3, 3));
    const std::vector<std::size_t> ctx{0, 1, 0, 1};
    const auto z = offline_optimal(zero, f, ctx, 1);
    CHECK(z.actions == std::vector<std::size_t>{2, 0, 2, 0});
    CHECK(z.cost == 0.0);
}

TEST_CASE("offline optimum: ties go to the lowest index") {
    const FiniteMetric zero(Eigen::MatrixXd::Zero(3, 3));
    const Eigen::MatrixXd f = Eigen::MatrixXd::Ones(3, 1);
    const std::vector<std::size_t> ctx{0, 0};
    CHECK(offline_optimal(zero, f, ctx, 2).actions == std::vector<std::size_t>{0, 0});
}

TEST_CASE("offline optimum equals enumeration, n = 4, H = 4") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> xs(4);
        for (auto& x : xs) x = testsupport::uniform(rng, 0.0, 2.0);
        const auto d = line_metric(xs);
        Eigen::MatrixXd f(4, 3);
        for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = testsupport::uniform(rng, 0.0, 2.0);
        std::vector<std::size_t> ctx(4);
        for (auto& c : ctx) c = testsupport::uniform_int(rng, 0, 2);
        const std::size_t x0 = testsupport::uniform_int(rng, 0, 3);
        const auto dp = offline_optimal(d, f, ctx, x0);
        const auto bf = brute_force(d, f, ctx, x0);
        CHECK(dp.cost == doctest::Approx(bf.cost).epsilon(1e-12));
        CHECK(sequence_cost(d, f, ctx, x0, dp.actions) == doctest::Approx(dp.cost).epsilon(1e-12));
    }
}

TEST_CASE("offline optimum input errors") {
    const auto d = line_metric({0.0, 1.0});
    Eigen::MatrixXd f(2, 2);
    f << 1, 2, 3, std::numeric_limits<double>::quiet_NaN();
    const std::vector<std::size_t> ok{0}, bad{1}, outside{2};
    CHECK_NOTHROW(offline_optimal(d, f, ok, 0));
    CHECK_THROWS_AS(offline_optimal(d, f, bad, 0), InputError);
    CHECK_THROWS_AS(offline_optimal(d, f, outside, 0), InputError);
    CHECK_THROWS_AS(offline_optimal(d, Eigen::MatrixXd::Ones(3, 1), ok, 0), InputError);
}

TEST_CASE("hallucinated optimum clamps at zero") {
    const auto d = line_metric({0.0, 1.0});
    Eigen::MatrixXd lcb(2, 1);
    lcb << -3.0, 0.2;
    const std::vector<std::size_t> ctx{0, 0};
    const auto h = hallucinated_optimal(d, lcb, ctx, 1);
    // Clamped table {0, 0.2}: staying costs 0.4, moving costs 1 + 0.
    CHECK(h.cost == doctest::Approx(0.4));
    CHECK(h.actions == std::vector<std::size_t>{1, 1});
    // At 0.5 the two plans tie at 1.0 and the lower index wins.
    lcb(1, 0) = 0.5;
    CHECK(hallucinated_optimal(d, lcb, ctx, 1).actions == std::vector<std::size_t>{0, 0});
}

TEST_CASE("regret arithmetic") {
    const std::vector<double> opt{2.0, 3.0, 1.0};
    const double a = 1.5, b = 0.5;
    std::vector<double> cost;
    for (double o : opt) cost.push_back(a * o + b);
    const auto zero = regret(cost, opt, a, b);
    CHECK(zero.total() == 0.0);
    for (double r : zero.episode_regret) CHECK(r == 0.0);

    const auto same = regret(opt, opt, 1.0, 0.0);
    for (double r : same.episode_regret) CHECK(r == 0.0);

    // alpha = (ln 16)^2, beta = 0, hand arithmetic for episode 2.
    const double alpha = std::log(16.0) * std::log(16.0);
    const std::vector<double> c{10.0, 4.0, 7.0};
    const auto r = regret(c, opt, alpha, 0.0);
    CHECK(r.episode_regret[1] == 4.0 - alpha * 3.0);
    CHECK(r.cumulative[1] == (10.0 - alpha * 2.0) + (4.0 - alpha * 3.0));
    CHECK(r.average[2] == r.cumulative[2] / 3.0);

    EpisodeLog l1(0), l2(0);
    l1.push({0, 0, 3.0, 1.0, 0.0});
    l2.push({0, 0, 1.0, 0.0, 0.0});
    const std::vector<EpisodeLog> logs{l1, l2};
    const std::vector<double> o2{2.0, 1.0};
    const auto rl = regret(logs, o2, 1.0, 1.0);
    CHECK(rl.episode_regret == std::vector<double>{1.0, -1.0});
    const auto j = rl.to_json();
    for (const char* key : {"alpha", "beta", "episode_cost", "optimal_cost", "episode_regret", "cumulative_regret",
                            "average_regret", "total_regret"})
        CHECK(j.contains(key));
}

TEST_CASE("synthetic instance normalization") {
    SynthOptions o;
    o.grid_side = 6;
    o.num_contexts = 5;
    const auto s = synth_instance(4, o);
    CHECK(s.metric.size() == 36);
    CHECK(s.f.rows() == 36);
    CHECK(s.f.cols() == 5);
    CHECK(s.f.minCoeff() == doctest::Approx(0.0));
    CHECK(s.f.mean() == doctest::Approx(s.metric.mean_pairwise()).epsilon(1e-12));
    CHECK(s.noise_sigma == doctest::Approx(0.01 * (s.f.maxCoeff() - s.f.minCoeff())).epsilon(1e-12));
    for (Eigen::Index i = 0; i < s.contexts.size(); ++i) {
        CHECK(s.contexts(i) > 0.0);
        CHECK(s.contexts(i) < 1.0);
    }
    const auto again = synth_instance(4, o);
    CHECK(again.f == s.f);
    CHECK(synth_instance(5, o).f != s.f);
}

namespace {

struct Lag {
    int dx, dy;
    int c0, c1;
};

// Empirical covariance at one lag, pooled over every grid pair sharing it (the kernel is
// stationary), from `seeds` independent tables.
double pooled_cov(const Eigen::VectorXd& axis, const Eigen::VectorXd& ctx, double l, int seeds, Lag lag) {
    std::vector<Eigen::MatrixXd> draws;
    for (int s = 0; s < seeds; ++s) draws.push_back(sample_gp_table(axis, ctx, l, 1e-8, static_cast<std::uint64_t>(s)));
    const int g = static_cast<int>(axis.size());
    double acc = 0.0;
    int pairs = 0;
    for (int iy = 0; iy + lag.dy < g; ++iy)
        for (int ix = 0; ix + lag.dx < g; ++ix) {
            const int a = iy * g + ix, b = (iy + lag.dy) * g + ix + lag.dx;
            double sab = 0.0, sa = 0.0, sb = 0.0;
            for (const auto& t : draws) {
                sab += t(a, lag.c0) * t(b, lag.c1);
                sa += t(a, lag.c0);
                sb += t(b, lag.c1);
            }
            acc += (sab - sa * sb / seeds) / (seeds - 1);
            ++pairs;
        }
    return acc / pairs;
}

} // namespace

TEST_CASE("sampled covariance matches the kernel") {
    Eigen::VectorXd axis(5);
    axis << 0.0, 0.25, 0.5, 0.75, 1.0;
    Eigen::VectorXd ctx(3);
    ctx << 0.1, 0.2, 0.5;
    const double l = 0.2;
    const auto kern = [&](Lag lag) {
        const double dx = 0.25 * lag.dx, dy = 0.25 * lag.dy, dc = ctx(lag.c1) - ctx(lag.c0);
        return std::exp(-0.5 * (dx * dx + dy * dy + dc * dc) / (l * l));
    };
    // 500 seeds resolve 10% only where the covariance is large (k >= 0.4).
    for (const Lag lag : {Lag{0, 0, 0, 0}, Lag{1, 0, 0, 0}, Lag{0, 1, 0, 0}, Lag{0, 0, 0, 1}, Lag{0, 0, 1, 1}}) {
        const double want = kern(lag);
        REQUIRE(want >= 0.4);
        CHECK(std::abs(pooled_cov(axis, ctx, l, 500, lag) - want) <= 0.1 * want);
    }
    // A weakly correlated lag (k ~ 0.18) needs more draws for the same relative accuracy.
    const Lag far{1, 1, 0, 1};
    CHECK(std::abs(pooled_cov(axis, ctx, l, 20000, far) - kern(far)) <= 0.1 * kern(far));
}
