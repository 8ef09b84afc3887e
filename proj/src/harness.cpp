#include "gpmd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "gpmd/csv.hpp"
#include "gpmd/errors.hpp"
#include "gpmd/rng.hpp"
#include "gpmd/tree_transport.hpp"

namespace gpmd {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentKind parse_experiment(const std::string& name) {
    if (name == "synthetic") return ExperimentKind::Synthetic;
    if (name == "wind") return ExperimentKind::Wind;
    if (name == "mts-demo") return ExperimentKind::MtsDemo;
    throw ParameterError("kind: unknown experiment '" + name + "'");
}

std::string experiment_name(ExperimentKind kind) {
    switch (kind) {
    case ExperimentKind::Synthetic: return "synthetic";
    case ExperimentKind::Wind: return "wind";
    case ExperimentKind::MtsDemo: return "mts-demo";
    }
    return "?";
}

// ---------------------------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
    if (seeds.empty()) throw ParameterError("seeds: at least one seed is required");
    if (policies.empty()) throw ParameterError("policies: at least one policy is required");
    if (rhos.empty()) throw ParameterError("rhos: at least one rho is required");
    for (double r : rhos)
        if (!(r > 0.0) || !std::isfinite(r)) throw ParameterError("rhos: every rho must be positive");
    if (steps < 1) throw ParameterError("steps: must be >= 1");
    if (episodes < 1) throw ParameterError("episodes: must be >= 1");
    if (!(tau > 1.0)) throw ParameterError("tau: must be > 1");
    if (!(kappa >= 1.0)) throw ParameterError("kappa: must be >= 1");
    if (!(beta_constant >= 0.0)) throw ParameterError("beta_constant: must be >= 0");
    if (!std::isfinite(alpha) || !std::isfinite(beta)) throw ParameterError("alpha/beta: must be finite");
    if (synth.grid_side < 1 || synth.num_contexts < 1) throw ParameterError("synth: grid_side and num_contexts must be >= 1");
    if (!(synth.lengthscale > 0.0)) throw ParameterError("synth.lengthscale: must be positive");
    for (auto v : {gp.lengthscale, gp.outputscale, gp.lambda})
        if (v && !(*v > 0.0)) throw ParameterError("gp: lengthscale, outputscale and lambda must be positive");
    if (!(gp.delta > 0.0 && gp.delta <= 1.0)) throw ParameterError("gp.delta: must lie in (0, 1]");
    energy.validate();
    if (kind == ExperimentKind::Wind && !dataset.empty() && !fs::exists(dataset))
        throw ParameterError("dataset: file " + dataset.string() + " does not exist");
}

namespace {

std::string weighting_name(Weighting w) { return w == Weighting::Rho ? "rho" : "convex"; }
std::string start_name(StartMode s) { return s == StartMode::Random ? "random" : "all"; }
std::string update_name(UpdateMode u) { return u == UpdateMode::PerStep ? "per-step" : "per-episode"; }
std::string beta_name(BetaMode b) { return b == BetaMode::Constant ? "constant" : "theory"; }

// Turns {"energy.c1": x} into {"energy": {"c1": x}}.
json expand_dotted(const json& in) {
    json out = json::object();
    for (auto it = in.begin(); it != in.end(); ++it) {
        const std::string& key = it.key();
        if (key.find('.') == std::string::npos) {
            if (out.contains(key) && out[key].is_object() && it->is_object()) out[key].update(*it);
            else out[key] = *it;
            continue;
        }
        json* node = &out;
        std::size_t pos = 0;
        while (true) {
            const auto dot = key.find('.', pos);
            const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
            if (dot == std::string::npos) {
                (*node)[part] = *it;
                break;
            }
            if (!node->contains(part)) (*node)[part] = json::object();
            node = &(*node)[part];
            pos = dot + 1;
        }
    }
    return out;
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ParameterError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ParameterError((where.empty() ? "" : where + ".") + it.key() + ": unknown configuration key");
    }
}

template <class T>
T get_field(const json& j, const char* key, const std::string& where, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ParameterError((where.empty() ? "" : where + ".") + key + ": wrong type");
    }
}

} // namespace

json RunConfig::to_json() const {
    json pol = json::array();
    for (auto p : policies) pol.push_back(policy_name(p));
    json g = {{"rkhs_bound", gp.rkhs_bound}, {"delta", gp.delta}};
    if (gp.lengthscale) g["lengthscale"] = *gp.lengthscale;
    if (gp.outputscale) g["outputscale"] = *gp.outputscale;
    if (gp.lambda) g["lambda"] = *gp.lambda;
    return {{"kind", experiment_name(kind)},
            {"policies", pol},
            {"seeds", seeds},
            {"rhos", rhos},
            {"steps", steps},
            {"episodes", episodes},
            {"tau", tau},
            {"kappa", kappa},
            {"beta_mode", beta_name(beta_mode)},
            {"beta_constant", beta_constant},
            {"update_mode", update_name(update_mode)},
            {"weighting", weighting_name(weighting)},
            {"start_mode", start_name(start_mode)},
            {"alpha", alpha},
            {"beta", beta},
            {"out", out_dir.string()},
            {"dataset", dataset.string()},
            {"synth",
             {{"grid_side", synth.grid_side},
              {"num_contexts", synth.num_contexts},
              {"lengthscale", synth.lengthscale},
              {"jitter", synth.jitter}}},
            {"wind",
             {{"altitudes", wind_gen.altitudes},
              {"hours", wind_gen.hours},
              {"start", wind_gen.start},
              {"log_a", wind_gen.log_a},
              {"z0", wind_gen.z0},
              {"diurnal_amplitude", wind_gen.diurnal_amplitude},
              {"diurnal_phase_scale", wind_gen.diurnal_phase_scale},
              {"synoptic_rho", wind_gen.synoptic_rho},
              {"synoptic_sd", wind_gen.synoptic_sd},
              {"noise_sd", wind_gen.noise_sd}}},
            {"energy", energy.to_json()},
            {"gp", g}};
}

RunConfig RunConfig::from_json(const json& raw) {
    const json j = expand_dotted(raw);
    check_keys(j, "", {"kind", "policies", "seeds", "rhos", "steps", "episodes", "tau", "kappa", "beta_mode",
                       "beta_constant", "update_mode", "weighting", "start_mode", "alpha", "beta", "out", "dataset",
                       "synth", "wind", "energy", "gp"});
    RunConfig c;
    c.kind = parse_experiment(get_field<std::string>(j, "kind", "", experiment_name(c.kind)));
    if (j.contains("policies")) {
        c.policies.clear();
        for (const auto& p : get_field<std::vector<std::string>>(j, "policies", "", {})) {
            try {
                c.policies.push_back(parse_policy(p));
            } catch (const ParameterError& e) {
                throw ParameterError(std::string("policies: ") + e.what());
            }
        }
    }
    c.seeds = get_field(j, "seeds", "", c.seeds);
    c.rhos = get_field(j, "rhos", "", c.rhos);
    c.steps = get_field(j, "steps", "", c.steps);
    c.episodes = get_field(j, "episodes", "", c.episodes);
    c.tau = get_field(j, "tau", "", c.tau);
    c.kappa = get_field(j, "kappa", "", c.kappa);
    try {
        c.beta_mode = parse_beta_mode(get_field<std::string>(j, "beta_mode", "", beta_name(c.beta_mode)));
        c.update_mode = parse_update_mode(get_field<std::string>(j, "update_mode", "", update_name(c.update_mode)));
    } catch (const ParameterError& e) {
        throw ParameterError(std::string("beta_mode/update_mode: ") + e.what());
    }
    c.beta_constant = get_field(j, "beta_constant", "", c.beta_constant);
    const auto w = get_field<std::string>(j, "weighting", "", "rho");
    if (w == "rho") c.weighting = Weighting::Rho;
    else if (w == "convex") c.weighting = Weighting::Convex;
    else throw ParameterError("weighting: expected 'rho' or 'convex'");
    const auto s = get_field<std::string>(j, "start_mode", "", "random");
    if (s == "random") c.start_mode = StartMode::Random;
    else if (s == "all") c.start_mode = StartMode::All;
    else throw ParameterError("start_mode: expected 'random' or 'all'");
    c.alpha = get_field(j, "alpha", "", c.alpha);
    c.beta = get_field(j, "beta", "", c.beta);
    c.out_dir = get_field<std::string>(j, "out", "", c.out_dir.string());
    c.dataset = get_field<std::string>(j, "dataset", "", "");
    if (j.contains("synth")) {
        const auto& sj = j["synth"];
        check_keys(sj, "synth", {"grid_side", "num_contexts", "lengthscale", "jitter"});
        c.synth.grid_side = get_field(sj, "grid_side", "synth", c.synth.grid_side);
        c.synth.num_contexts = get_field(sj, "num_contexts", "synth", c.synth.num_contexts);
        c.synth.lengthscale = get_field(sj, "lengthscale", "synth", c.synth.lengthscale);
        c.synth.jitter = get_field(sj, "jitter", "synth", c.synth.jitter);
    }
    if (j.contains("wind")) {
        check_keys(j["wind"], "wind", {"altitudes", "hours", "start", "log_a", "z0", "diurnal_amplitude",
                                       "diurnal_phase_scale", "synoptic_rho", "synoptic_sd", "noise_sd"});
        try {
            c.wind_gen = WindGenOptions::from_json(j["wind"]);
        } catch (const json::exception&) {
            throw ParameterError("wind: wrong type");
        }
    }
    if (j.contains("energy")) {
        check_keys(j["energy"], "energy", {"c1", "c2", "c3", "v_rated", "dt_minutes"});
        try {
            c.energy = EnergyParams::from_json(j["energy"]);
        } catch (const json::exception&) {
            throw ParameterError("energy: wrong type");
        } catch (const ParameterError& e) {
            throw ParameterError(std::string("energy: ") + e.what());
        }
    }
    if (j.contains("gp")) {
        const auto& gj = j["gp"];
        check_keys(gj, "gp", {"lengthscale", "outputscale", "lambda", "rkhs_bound", "delta"});
        if (gj.contains("lengthscale")) c.gp.lengthscale = get_field(gj, "lengthscale", "gp", 0.0);
        if (gj.contains("outputscale")) c.gp.outputscale = get_field(gj, "outputscale", "gp", 0.0);
        if (gj.contains("lambda")) c.gp.lambda = get_field(gj, "lambda", "gp", 0.0);
        c.gp.rkhs_bound = get_field(gj, "rkhs_bound", "gp", c.gp.rkhs_bound);
        c.gp.delta = get_field(gj, "delta", "gp", c.gp.delta);
    }
    return c;
}

std::string RunConfig::hash() const {
    json j = to_json();
    j.erase("out"); // where the artifacts go does not change them
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string CellKey::name() const {
    return policy_name(policy) + "_rho" + csv::format_double(rho) + "_seed" + std::to_string(seed) + "_start" +
           std::to_string(start);
}

json CellResult::summary() const {
    json j = {{"name", key.name()},
              {"policy", policy_name(key.policy)},
              {"seed", key.seed},
              {"rho", key.rho},
              {"start", key.start},
              {"status", ok ? "ok" : "failed"}};
    if (!ok) {
        j["error"] = error;
        return j;
    }
    j["service"] = service;
    j["movement"] = movement;
    j["total"] = total;
    j["offline_optimal"] = optimal;
    if (energy) j["energy"] = *energy;
    if (energy_unweighted) j["energy_unweighted"] = *energy_unweighted;
    j["regret"] = regret.to_json();
    return j;
}

std::pair<double, double> cost_weights(const RunConfig& config, double rho) {
    if (config.weighting == Weighting::Rho) return {rho, 1.0};
    return {rho / (1.0 + rho), 1.0 / (1.0 + rho)};
}

// ---------------------------------------------------------------------------------------------
// Problems and cells

SeedProblem build_problem(const RunConfig& config, std::uint64_t seed) {
    SeedProblem p;
    p.seed = seed;
    const std::size_t horizon = config.steps;
    if (config.kind == ExperimentKind::Synthetic) {
        SynthInstance inst = synth_instance(seed, config.synth);
        p.metric = std::make_shared<const FiniteMetric>(inst.metric);
        p.f = std::move(inst.f);
        p.action_features = std::move(inst.action_coords);
        p.context_features = inst.contexts;
        p.noise_sigma = inst.noise_sigma;
        p.f_scale = inst.scale;
        Rng ctx = make_stream(seed, Stream::Context);
        Rng noise = make_stream(seed, Stream::Noise);
        const auto c = static_cast<std::uint64_t>(p.f.cols());
        for (std::size_t m = 0; m < config.episodes; ++m) {
            std::vector<std::size_t> cs(horizon);
            std::vector<double> ns(horizon);
            for (std::size_t h = 0; h < horizon; ++h) {
                cs[h] = static_cast<std::size_t>(std::uniform_int_distribution<std::uint64_t>(0, c - 1)(ctx));
                ns[h] = p.noise_sigma * standard_normal(noise);
            }
            p.contexts.push_back(std::move(cs));
            p.noise.push_back(std::move(ns));
        }
    } else if (config.kind == ExperimentKind::Wind) {
        auto wind = config.dataset.empty() ? synth_wind(seed, config.wind_gen) : ingest_wind_csv(config.dataset);
        p.wind = std::make_shared<const WindTable>(std::move(wind));
        p.metric = std::make_shared<const FiniteMetric>(altitude_metric(config.energy, p.wind->altitudes()));
        p.energy = energy_table(config.energy, *p.wind);
        p.f = service_table(config.energy, *p.wind);
        const std::size_t t_count = p.wind->num_times();
        // Episodes replay consecutive stretches of the trace, wrapping at its end.
        for (std::size_t m = 0; m < config.episodes; ++m) {
            std::vector<std::size_t> cs(horizon);
            for (std::size_t h = 0; h < horizon; ++h) cs[h] = (m * horizon + h) % t_count;
            p.contexts.push_back(std::move(cs));
            p.noise.emplace_back(horizon, 0.0);
        }
    } else {
        throw ParameterError("kind: mts-demo has no seeded problem");
    }

    const bool need_tree = std::any_of(config.policies.begin(), config.policies.end(), policy_uses_tree);
    if (need_tree) p.tree = std::make_shared<const HstTree>(frt_embed(*p.metric, config.tau, seed));

    const std::size_t n = p.metric->size();
    if (config.start_mode == StartMode::All) {
        for (std::size_t x = 0; x < n; ++x) p.starts.push_back(x);
    } else {
        Rng start = make_stream(seed, Stream::Start);
        p.starts.push_back(static_cast<std::size_t>(std::uniform_int_distribution<std::uint64_t>(0, n - 1)(start)));
    }
    return p;
}

Policy make_policy(const RunConfig& config, const SeedProblem& problem, PolicyKind kind, double rho) {
    PolicyOptions opts;
    opts.kind = kind;
    opts.rho = rho;
    opts.kappa = config.kappa;
    opts.update_mode = config.update_mode;
    const BetaSchedule beta{config.beta_mode, config.beta_constant};

    std::unique_ptr<CostLearner> learner;
    if (kind == PolicyKind::MdKnown || kind == PolicyKind::MinCKnown) {
        learner = std::make_unique<ExactCostLearner>(problem.f);
    } else if (policy_learns(kind)) {
        if (problem.wind) {
            const double ls = config.gp.lengthscale.value_or(3.67);
            const double os = config.gp.outputscale.value_or(6.85);
            const double lam = config.gp.lambda.value_or(2.73);
            // Standardize (altitude, hour) over the full design grid.
            const auto& alts = problem.wind->altitudes();
            Eigen::MatrixXd grid(static_cast<Eigen::Index>(alts.size() * 24), 2);
            Eigen::Index r = 0;
            for (double a : alts)
                for (int h = 0; h < 24; ++h) grid.row(r++) << a, static_cast<double>(h);
            const Kernel k = Kernel::squared_exponential(Eigen::VectorXd::Constant(1, ls), os)
                                 .with_transform(InputTransform::standardize(grid));
            std::vector<int> hours;
            for (std::size_t t = 0; t < problem.wind->num_times(); ++t) hours.push_back(problem.wind->hour(t));
            learner = std::make_unique<WindCostLearner>(
                k, GpHyper{lam, std::sqrt(lam), config.gp.rkhs_bound, config.gp.delta}, config.energy, alts,
                std::move(hours), beta);
        } else {
            const double ls = config.gp.lengthscale.value_or(config.synth.lengthscale);
            const double os = config.gp.outputscale.value_or(problem.f_scale * problem.f_scale);
            const double lam = config.gp.lambda.value_or(std::max(problem.noise_sigma * problem.noise_sigma, 1e-10));
            const Eigen::Index dim = problem.action_features.cols() + problem.context_features.cols();
            GpModel gp(Kernel::squared_exponential(Eigen::VectorXd::Constant(1, ls), os),
                       GpHyper{lam, problem.noise_sigma, config.gp.rkhs_bound, config.gp.delta}, dim);
            learner = std::make_unique<GpCostLearner>(std::move(gp), problem.action_features, problem.context_features,
                                                      beta);
        }
    }
    return Policy(opts, *problem.metric, policy_uses_tree(kind) ? problem.tree : nullptr, std::move(learner));
}

CellResult run_cell(const RunConfig& config, const SeedProblem& problem, const CellKey& key) {
    CellResult out;
    out.key = key;
    Policy policy = make_policy(config, problem, key.policy, key.rho);
    const auto [sw, mw] = cost_weights(config, key.rho);
    const FiniteMetric& d = *problem.metric;
    // Same stream for every policy of this (seed, start).
    Rng rng = make_stream(problem.seed, Stream::Coupling, key.start);

    std::vector<double> episode_costs;
    std::vector<double> opt_costs;
    double total = 0.0;
    double es_sum = 0.0;
    double em_sum = 0.0;
    const Eigen::MatrixXd service_table = problem.f * (sw / mw);
    for (std::size_t m = 0; m < problem.contexts.size(); ++m) {
        const auto& ctx = problem.contexts[m];
        EpisodeLog log(key.start);
        policy.begin_episode(key.start);
        std::size_t prev = key.start;
        for (std::size_t h = 0; h < ctx.size(); ++h) {
            const std::size_t c = ctx[h];
            const ActInfo info = policy.act(c, rng);
            const std::size_t a = info.action;
            const double fa = problem.f(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
            const double service = sw * fa;
            const double movement = mw * d(prev, a);
            const double y = problem.wind ? problem.wind->speed(c, a) : fa + problem.noise[m][h];
            policy.observe(a, c, y);
            log.push({c, a, service, movement, y});
            out.service += service;
            out.movement += movement;
            total += service + movement;
            if (problem.wind) {
                es_sum += problem.energy(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
                em_sum += d(prev, a);
            }
            prev = a;
        }
        policy.end_episode();
        episode_costs.push_back(log.cost());
        opt_costs.push_back(mw * offline_optimal(d, service_table, ctx, key.start).cost);
        out.episodes.push_back(std::move(log));
    }
    out.total = total;
    for (double o : opt_costs) out.optimal += o;
    out.regret = regret(episode_costs, opt_costs, config.alpha, config.beta);
    if (problem.wind) {
        out.energy = key.rho * es_sum - em_sum;
        out.energy_unweighted = es_sum - em_sum;
    }
    out.ok = true;
    return out;
}

void write_cell_csv(const CellResult& result, double, double, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << "step,episode,context,action,service,movement,cum_total\n";
    double cum = 0.0;
    for (std::size_t m = 0; m < result.episodes.size(); ++m) {
        const auto& steps = result.episodes[m].steps();
        for (std::size_t h = 0; h < steps.size(); ++h) {
            const auto& s = steps[h];
            cum += s.service + s.movement;
            out << (h + 1) << ',' << (m + 1) << ',' << s.context << ',' << s.action << ','
                << csv::format_double(s.service) << ',' << csv::format_double(s.movement) << ','
                << csv::format_double(cum) << '\n';
        }
    }
}

namespace {

std::size_t worker_count() {
    if (const char* env = std::getenv("GPMD_WORKERS")) {
        const int v = std::atoi(env);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    return 1;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace

RunStatus run(const RunConfig& config, std::ostream& log) {
    config.validate();
    if (config.kind == ExperimentKind::MtsDemo) {
        mts_demo(log, config.kappa);
        return {};
    }
    const fs::path cells_dir = config.out_dir / "cells";
    fs::create_directories(cells_dir);

    std::mutex log_mutex;
    std::vector<std::shared_ptr<const SeedProblem>> problems(config.seeds.size());
    std::vector<std::string> problem_errors(config.seeds.size());
    for (std::size_t s = 0; s < config.seeds.size(); ++s) {
        try {
            problems[s] = std::make_shared<const SeedProblem>(build_problem(config, config.seeds[s]));
        } catch (const std::exception& e) {
            problem_errors[s] = e.what();
            log << "seed " << config.seeds[s] << ": problem setup failed: " << e.what() << '\n';
        }
    }

    struct Job {
        std::size_t seed_index;
        CellKey key;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < config.seeds.size(); ++s) {
        const std::vector<std::size_t> starts = problems[s] ? problems[s]->starts : std::vector<std::size_t>{0};
        for (double rho : config.rhos)
            for (std::size_t x0 : starts)
                for (PolicyKind p : config.policies) jobs.push_back({s, CellKey{p, config.seeds[s], rho, x0}});
    }

    std::vector<CellResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const Job& job = jobs[i];
            CellResult r;
            r.key = job.key;
            try {
                if (!problems[job.seed_index]) throw Error(problem_errors[job.seed_index]);
                r = run_cell(config, *problems[job.seed_index], job.key);
                const auto [sw, mw] = cost_weights(config, job.key.rho);
                write_cell_csv(r, sw, mw, cells_dir / (job.key.name() + ".csv"));
            } catch (const std::exception& e) {
                r.ok = false;
                r.error = e.what();
            }
            write_json(cells_dir / (job.key.name() + ".json"), r.summary());
            {
                std::lock_guard<std::mutex> lock(log_mutex);
                log << (r.ok ? "done   " : "FAILED ") << job.key.name();
                if (r.ok) log << " total=" << csv::format_double(r.total);
                else log << ": " << r.error;
                log << '\n';
            }
            r.episodes.clear(); // keep memory flat; the CSV has the steps
            results[i] = std::move(r);
        }
    };
    const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(1, jobs.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    RunStatus status;
    status.cells = results.size();
    json cells = json::array();
    json names = json::array();
    for (const auto& r : results) {
        cells.push_back(r.summary());
        names.push_back(r.key.name());
        if (!r.ok) ++status.failed;
    }
    write_json(config.out_dir / "summary.json",
               {{"kind", experiment_name(config.kind)}, {"config_hash", config.hash()}, {"cells", cells}});
    write_json(config.out_dir / "manifest.json",
               {{"config", config.to_json()}, {"config_hash", config.hash()}, {"seeds", config.seeds}, {"cells", names}});
    status.exit_code = status.failed ? 2 : 0;
    return status;
}

// ---------------------------------------------------------------------------------------------
// Report

ReportResult report(const fs::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw InputError("no manifest.json in " + dir.string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw InputError("unreadable manifest.json: " + std::string(e.what()));
    }

    struct Acc {
        std::vector<double> total, movement, service, energy, regret;
    };
    std::vector<std::pair<std::string, double>> order;
    std::map<std::pair<std::string, double>, Acc> groups;
    ReportResult out;
    for (const auto& name_j : manifest.at("cells")) {
        const auto name = name_j.get<std::string>();
        std::ifstream cf(dir / "cells" / (name + ".json"));
        json cell;
        bool ok = static_cast<bool>(cf);
        if (ok) {
            try {
                cf >> cell;
                ok = cell.value("status", "") == "ok";
            } catch (const json::exception&) {
                ok = false;
            }
        }
        if (!ok) {
            out.missing.push_back(name);
            continue;
        }
        const std::pair<std::string, double> key{cell.at("policy").get<std::string>(), cell.at("rho").get<double>()};
        if (!groups.count(key)) order.push_back(key);
        auto& acc = groups[key];
        acc.total.push_back(cell.at("total").get<double>());
        acc.movement.push_back(cell.at("movement").get<double>());
        acc.service.push_back(cell.at("service").get<double>());
        if (cell.contains("energy")) acc.energy.push_back(cell["energy"].get<double>());
        acc.regret.push_back(cell.at("regret").at("total_regret").get<double>());
    }

    const auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    const auto sd = [&](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double m = mean(v);
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    for (const auto& key : order) {
        const auto& a = groups[key];
        AggregateRow row{key.first, key.second, a.total.size(), mean(a.total), sd(a.total), mean(a.movement),
                         sd(a.movement), mean(a.service), sd(a.service), std::nullopt, std::nullopt, mean(a.regret)};
        if (!a.energy.empty()) {
            row.energy_mean = mean(a.energy);
            row.energy_std = sd(a.energy);
        }
        out.rows.push_back(row);
    }

    std::ofstream csvf(dir / "aggregate.csv", std::ios::binary);
    if (!csvf) throw InputError("cannot write aggregate.csv");
    csvf << "policy,rho,cells,total_mean,total_std,movement_mean,movement_std,service_mean,service_std,energy_mean,"
            "energy_std,regret_mean\n";
    const auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
    for (const auto& r : out.rows)
        csvf << r.policy << ',' << csv::format_double(r.rho) << ',' << r.cells << ',' << csv::format_double(r.total_mean)
             << ',' << csv::format_double(r.total_std) << ',' << csv::format_double(r.movement_mean) << ','
             << csv::format_double(r.movement_std) << ',' << csv::format_double(r.service_mean) << ','
             << csv::format_double(r.service_std) << ',' << opt(r.energy_mean) << ',' << opt(r.energy_std) << ','
             << csv::format_double(r.regret_mean) << '\n';
    return out;
}

// ---------------------------------------------------------------------------------------------
// Walkthrough

void mts_demo(std::ostream& out, double kappa) {
    // Root u7; u5, u6 below it; u1..u4 on the next layer; leaves l1..l8. Weights halve per layer.
    std::vector<HstVertex> v(15);
    const auto link = [&](int parent, int child, double w) {
        v[static_cast<std::size_t>(child)].parent = parent;
        v[static_cast<std::size_t>(child)].weight = w;
        v[static_cast<std::size_t>(parent)].children.push_back(child);
    };
    link(0, 1, 4.0);
    link(0, 2, 4.0);
    for (int u = 3; u < 7; ++u) link((u - 1) / 2, u, 2.0);
    for (int l = 7; l < 15; ++l) {
        link((l - 1) / 2, l, 1.0);
        v[static_cast<std::size_t>(l)].point = l - 7;
    }
    const HstTree tree(std::move(v), 0, 2.0);
    const auto label = [&](VertexId id) -> std::string {
        if (tree.is_leaf(id)) return "l" + std::to_string(tree.point_of(id) + 1);
        static const char* names[] = {"u7", "u5", "u6", "u1", "u2", "u3", "u4"};
        return names[id];
    };

    const std::vector<double> leaf_cost{0.8, 0.2, 0.5, 0.5, 0.1, 0.9, 0.3, 0.6};
    const std::vector<double> uniform(8, 1.0 / 8.0);
    const CondState q0 = delta_inverse(tree, lift(tree, uniform));

    out << "mirror-descent walkthrough: 8 leaves, depth 3, tau 2, kappa " << csv::format_double(kappa) << '\n';
    out << "leaf costs:";
    for (std::size_t i = 0; i < leaf_cost.size(); ++i) out << ' ' << "l" << (i + 1) << '=' << leaf_cost[i];
    out << "\nstart: uniform over leaves (every conditional 0.5)\n";

    std::vector<MdTraceRow> rows;
    const auto res = md_step(tree, kappa, q0, leaf_cost, {}, [&](const MdTraceRow& r) { rows.push_back(r); });

    std::size_t layer = 0;
    std::size_t current_depth = static_cast<std::size_t>(-1);
    VertexId current = kNoVertex;
    out << std::fixed << std::setprecision(6);
    const auto close_vertex = [&] {
        if (current != kNoVertex)
            out << "    cost(" << label(current) << ") = " << res.costs.cost[static_cast<std::size_t>(current)] << '\n';
    };
    for (const auto& r : rows) {
        if (r.vertex != current) {
            close_vertex();
            if (tree.depth(r.vertex) != current_depth) {
                current_depth = tree.depth(r.vertex);
                out << "layer " << ++layer << '\n';
            }
            current = r.vertex;
            out << "  update " << label(r.vertex) << '\n';
        }
        out << "    q(" << label(r.child) << ") " << r.q_before << " -> " << r.q_after << "   child cost "
            << r.child_cost << '\n';
    }
    close_vertex();

    const auto z = delta_map(tree, res.q);
    const auto l = leaf_distribution(tree, z);
    out << "leaf distribution:";
    double expected = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        out << ' ' << l[i];
        expected += l[i] * leaf_cost[i];
    }
    out << "\nexpected leaf cost " << expected << " = root cost " << res.costs.cost[0] << '\n';
    out << "W1 under d_T from the start: " << tree_wasserstein(tree, uniform, l) << '\n';
    out.unsetf(std::ios::floatfield);
}

} // namespace gpmd
