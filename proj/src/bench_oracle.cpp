#include "gpmd/bench_oracle.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "gpmd/errors.hpp"
#include "gpmd/rng.hpp"

namespace gpmd {

void EpisodeLog::push(const StepRecord& r) {
    steps_.push_back(r);
    service_ += r.service;
    movement_ += r.movement;
}

std::vector<std::size_t> EpisodeLog::contexts() const {
    std::vector<std::size_t> out;
    out.reserve(steps_.size());
    for (const auto& s : steps_) out.push_back(s.context);
    return out;
}

namespace {

void check_table(const FiniteMetric& metric, const Eigen::MatrixXd& service, std::span<const std::size_t> contexts,
                 std::size_t x0) {
    if (static_cast<std::size_t>(service.rows()) != metric.size())
        throw InputError("service table has " + std::to_string(service.rows()) + " rows for " +
                         std::to_string(metric.size()) + " actions");
    if (x0 >= metric.size()) throw InputError("initial action out of range");
    for (std::size_t h = 0; h < contexts.size(); ++h) {
        if (contexts[h] >= static_cast<std::size_t>(service.cols()))
            throw InputError("context " + std::to_string(contexts[h]) + " at step " + std::to_string(h + 1) +
                             " has no service table column");
        if (!service.col(static_cast<Eigen::Index>(contexts[h])).allFinite())
            throw InputError("service table column " + std::to_string(contexts[h]) + " has missing entries");
    }
}

} // namespace

OfflineSolution offline_optimal(const FiniteMetric& metric, const Eigen::MatrixXd& service,
                                std::span<const std::size_t> contexts, std::size_t x0) {
    check_table(metric, service, contexts, x0);
    const std::size_t n = metric.size();
    const std::size_t horizon = contexts.size();
    if (horizon == 0) return {{}, 0.0};

    const Eigen::MatrixXd& d = metric.matrix();
    // value(x) = cheapest cost of steps 1..h ending in x.
    Eigen::VectorXd value(static_cast<Eigen::Index>(n));
    for (std::size_t x = 0; x < n; ++x)
        value(static_cast<Eigen::Index>(x)) = d(static_cast<Eigen::Index>(x0), static_cast<Eigen::Index>(x));
    std::vector<std::vector<std::uint32_t>> from(horizon);
    value += service.col(static_cast<Eigen::Index>(contexts[0]));

    Eigen::VectorXd next(static_cast<Eigen::Index>(n));
    for (std::size_t h = 1; h < horizon; ++h) {
        auto& pred = from[h];
        pred.resize(n);
        const auto col = service.col(static_cast<Eigen::Index>(contexts[h]));
        for (std::size_t x = 0; x < n; ++x) {
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t arg = 0;
            for (std::size_t p = 0; p < n; ++p) {
                const double c = value(static_cast<Eigen::Index>(p)) + d(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(x));
                if (c < best) {
                    best = c;
                    arg = static_cast<std::uint32_t>(p);
                }
            }
            next(static_cast<Eigen::Index>(x)) = best + col(static_cast<Eigen::Index>(x));
            pred[x] = arg;
        }
        value.swap(next);
    }

    OfflineSolution out;
    Eigen::Index last = 0;
    out.cost = value.minCoeff(&last); // minCoeff returns the first minimizer
    out.actions.resize(horizon);
    out.actions[horizon - 1] = static_cast<std::size_t>(last);
    for (std::size_t h = horizon - 1; h > 0; --h) out.actions[h - 1] = from[h][out.actions[h]];
    return out;
}

OfflineSolution hallucinated_optimal(const FiniteMetric& metric, const Eigen::MatrixXd& lcb_table,
                                     std::span<const std::size_t> contexts, std::size_t x0) {
    return offline_optimal(metric, lcb_table.cwiseMax(0.0), contexts, x0);
}

double sequence_cost(const FiniteMetric& metric, const Eigen::MatrixXd& service, std::span<const std::size_t> contexts,
                     std::size_t x0, std::span<const std::size_t> actions) {
    check_table(metric, service, contexts, x0);
    if (actions.size() != contexts.size()) throw InputError("action and context sequences differ in length");
    double total = 0.0;
    std::size_t prev = x0;
    for (std::size_t h = 0; h < actions.size(); ++h) {
        if (actions[h] >= metric.size()) throw InputError("action out of range");
        total += service(static_cast<Eigen::Index>(actions[h]), static_cast<Eigen::Index>(contexts[h])) + metric(prev, actions[h]);
        prev = actions[h];
    }
    return total;
}

nlohmann::json RegretReport::to_json() const {
    return {{"alpha", alpha},
            {"beta", beta},
            {"episode_cost", episode_cost},
            {"optimal_cost", optimal_cost},
            {"episode_regret", episode_regret},
            {"cumulative_regret", cumulative},
            {"average_regret", average},
            {"total_regret", total()}};
}

RegretReport regret(std::span<const double> episode_costs, std::span<const double> opt_costs, double alpha, double beta) {
    if (episode_costs.size() != opt_costs.size()) throw InputError("episode and optimum counts differ");
    RegretReport r;
    r.alpha = alpha;
    r.beta = beta;
    r.episode_cost.assign(episode_costs.begin(), episode_costs.end());
    r.optimal_cost.assign(opt_costs.begin(), opt_costs.end());
    double running = 0.0;
    for (std::size_t m = 0; m < episode_costs.size(); ++m) {
        const double rm = episode_costs[m] - alpha * opt_costs[m] - beta;
        running += rm;
        r.episode_regret.push_back(rm);
        r.cumulative.push_back(running);
        r.average.push_back(running / static_cast<double>(m + 1));
    }
    return r;
}

RegretReport regret(std::span<const EpisodeLog> logs, std::span<const double> opt_costs, double alpha, double beta) {
    std::vector<double> costs;
    costs.reserve(logs.size());
    for (const auto& log : logs) costs.push_back(log.cost());
    return regret(costs, opt_costs, alpha, beta);
}

// ---------------------------------------------------------------------------------------------
// Synthetic instances

namespace {

Eigen::MatrixXd se_gram(const Eigen::VectorXd& pts, double lengthscale) {
    const Eigen::Index n = pts.size();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double r = (pts(i) - pts(j)) / lengthscale;
            k(i, j) = std::exp(-0.5 * r * r);
        }
    return k;
}

bool factor(const Eigen::MatrixXd& k, double jitter, Eigen::MatrixXd& l) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() != Eigen::Success) return false;
    l = llt.matrixL();
    return true;
}

} // namespace

Eigen::MatrixXd sample_gp_table(const Eigen::VectorXd& axis, const Eigen::VectorXd& contexts, double lengthscale,
                                double jitter, std::uint64_t seed) {
    if (!(lengthscale > 0.0)) throw ParameterError("lengthscale must be positive");
    const Eigen::Index g = axis.size();
    const Eigen::Index c = contexts.size();
    if (g < 1 || c < 1) throw ParameterError("empty grid or context set");

    Eigen::MatrixXd la;
    Eigen::MatrixXd lc;
    const Eigen::MatrixXd ka = se_gram(axis, lengthscale);
    const Eigen::MatrixXd kc = se_gram(contexts, lengthscale);
    if (!factor(ka, jitter, la) || !factor(kc, jitter, lc)) {
        if (!factor(ka, 1e-6, la) || !factor(kc, 1e-6, lc))
            throw SolverError("joint kernel matrix factorization failed even with jitter 1e-6", jitter);
    }

    // Tensor z(iy, ix, e) of standard normals; apply L along each axis. Action row = iy * g + ix.
    Rng rng = make_stream(seed, Stream::Instance);
    Eigen::MatrixXd table(g * g, c);
    for (Eigen::Index a = 0; a < g * g; ++a)
        for (Eigen::Index e = 0; e < c; ++e) table(a, e) = standard_normal(rng);

    // Context axis.
    table = (table * lc.transpose()).eval();
    // x axis (inner index ix): for each iy, rows [iy*g, iy*g+g) mix by L_a.
    for (Eigen::Index iy = 0; iy < g; ++iy) table.middleRows(iy * g, g) = (la * table.middleRows(iy * g, g)).eval();
    // y axis (outer index iy): for each ix, rows {iy*g + ix} mix by L_a.
    Eigen::MatrixXd slice(g, c);
    for (Eigen::Index ix = 0; ix < g; ++ix) {
        for (Eigen::Index iy = 0; iy < g; ++iy) slice.row(iy) = table.row(iy * g + ix);
        slice = (la * slice).eval();
        for (Eigen::Index iy = 0; iy < g; ++iy) table.row(iy * g + ix) = slice.row(iy);
    }
    return table;
}

SynthInstance synth_instance(std::uint64_t seed, const SynthOptions& options) {
    if (options.grid_side < 1 || options.num_contexts < 1) throw ParameterError("synthetic instance needs a non-empty grid");
    const auto g = static_cast<Eigen::Index>(options.grid_side);
    Eigen::VectorXd axis(g);
    for (Eigen::Index i = 0; i < g; ++i) axis(i) = g == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(g - 1);

    Eigen::MatrixXd coords(g * g, 2);
    for (Eigen::Index iy = 0; iy < g; ++iy)
        for (Eigen::Index ix = 0; ix < g; ++ix) coords.row(iy * g + ix) << axis(ix), axis(iy);

    Rng ctx_rng = make_stream(seed, Stream::Instance, 1);
    Eigen::VectorXd contexts(static_cast<Eigen::Index>(options.num_contexts));
    for (Eigen::Index e = 0; e < contexts.size(); ++e) {
        double u = uniform01(ctx_rng);
        while (u <= 0.0) u = uniform01(ctx_rng);
        contexts(e) = u;
    }

    Eigen::MatrixXd raw = sample_gp_table(axis, contexts, options.lengthscale, options.jitter, seed);
    FiniteMetric metric = FiniteMetric::from_points(coords);

    SynthInstance inst{std::move(metric), coords, contexts, {}, 1.0, 0.0, 0.0};
    inst.shift = raw.minCoeff();
    const double raw_mean = raw.mean() - inst.shift;
    const double target = inst.metric.mean_pairwise();
    inst.scale = raw_mean > 0.0 && target > 0.0 ? target / raw_mean : 1.0;
    inst.f = (raw.array() - inst.shift) * inst.scale;
    inst.noise_sigma = 0.01 * (inst.f.maxCoeff() - inst.f.minCoeff());
    return inst;
}

} // namespace gpmd
