#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "gpmd/gp_model.hpp"
#include "gpmd/metric_hst.hpp"

namespace gpmd {

/// Airborne wind energy constants. Energies are in (m/s)^3 * minutes of the simplified model.
struct EnergyParams {
    double c1 = 0.0579;
    double c2 = 0.09;
    double c3 = 0.15;
    /// Rated windspeed V_r in m/s.
    double v_rated = 12.0;
    double dt_minutes = 60.0;

    void validate() const;
    /// Reads `c1`, `c2`, `c3`, `v_rated`, `dt_minutes` from an object; missing keys keep defaults.
    static EnergyParams from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// E_S(v) = (c1 min(v, V_r)^3 - c2 v^2) dt.
double energy_service(const EnergyParams& p, double v);

/// E_M(x, x') = c3 V_r^2 |x - x'|.
double energy_move(const EnergyParams& p, double x, double x_prev);

/// Movement metric on the altitude set induced by energy_move.
FiniteMetric altitude_metric(const EnergyParams& p, const std::vector<double>& altitudes);

/// Hourly windspeed measurements on a fixed altitude grid.
class WindTable {
public:
    /// speeds: one row per timestamp, one column per altitude; NaN marks a missing entry.
    WindTable(std::vector<double> altitudes, std::vector<std::int64_t> timestamps, std::vector<int> hours,
              Eigen::MatrixXd speeds);

    const std::vector<double>& altitudes() const { return altitudes_; }
    std::size_t num_altitudes() const { return altitudes_.size(); }
    std::size_t num_times() const { return timestamps_.size(); }
    /// Seconds since the Unix epoch (UTC).
    std::int64_t timestamp(std::size_t t) const { return timestamps_.at(t); }
    /// Hour of day 0..23 as written in the timestamp.
    int hour(std::size_t t) const { return hours_.at(t); }
    const std::vector<int>& hours() const { return hours_; }
    /// Number of present (altitude, timestamp) entries.
    std::size_t entries() const;
    bool has(std::size_t t, std::size_t a) const;
    /// InputError when the entry is missing.
    double speed(std::size_t t, std::size_t a) const;
    const Eigen::MatrixXd& speeds() const { return speeds_; }

    /// Index of an altitude in the grid, or -1.
    std::ptrdiff_t altitude_index(double altitude) const;

    void write_csv(const std::filesystem::path& path) const;

private:
    std::vector<double> altitudes_;
    std::vector<std::int64_t> timestamps_;
    std::vector<int> hours_;
    Eigen::MatrixXd speeds_;
};

/// 25 altitudes evenly spaced from 10 m to 1600 m.
std::vector<double> default_altitudes();

/// Parses `YYYY-MM-DDTHH:MM[:SS][Z|+HH:MM|-HH:MM]` (a space may replace the T). Returns
/// (UTC epoch seconds, local hour of day). InputError on malformed text.
std::pair<std::int64_t, int> parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t epoch_seconds);

/// Reads `timestamp,altitude_m,windspeed_ms`. Rows sharing a timestamp form one time step and
/// timestamps must not decrease down the file. With a non-empty `altitudes`, every row must use
/// one of them; otherwise the grid is the sorted set of altitudes present. Errors name the line.
WindTable ingest_wind_csv(const std::filesystem::path& path, const std::vector<double>& altitudes = {});

/// E_S for every (altitude, time): rows are altitudes, columns time steps.
Eigen::MatrixXd energy_table(const EnergyParams& p, const WindTable& wind);

/// f(x, t) = max_x' E_S(x', t) - E_S(x, t) for altitude index a at time index t.
double service_objective(const EnergyParams& p, const WindTable& wind, std::size_t a, std::size_t t);

/// The full f table (altitudes x time steps).
Eigen::MatrixXd service_table(const EnergyParams& p, const WindTable& wind);

/// Range of E_S over the windspeed interval [lo, hi] (lo clipped at 0). Extrema sit at the
/// endpoints, at V_r, or at the local minimum 2 c2 / (3 c1) of the cubic branch.
std::pair<double, double> energy_interval(const EnergyParams& p, double lo, double hi);

struct CostBounds {
    std::vector<double> lcb;
    std::vector<double> ucb;
    /// Per-timestep constant C = max_x ucb of E_S.
    double offset = 0.0;
};

/// Confidence bounds of f at one time step from windspeed bounds [mu - beta sigma, mu + beta sigma]
/// per altitude: lcb_f = max(0, C - ucb_ES), ucb_f = C - lcb_ES with C = max over altitudes of ucb_ES.
CostBounds propagate_bounds(const EnergyParams& p, const Eigen::VectorXd& mean, const Eigen::VectorXd& stdev,
                            double beta);

/// Same, reading the windspeed posterior from a GP over (altitude, hour) inputs.
CostBounds propagate_bounds(const GpModel& gp, const EnergyParams& p, const std::vector<double>& altitudes, int hour,
                            double beta, double prior_mean = 0.0);

/// Synthetic hourly wind trace: log profile a ln(x / z0), scaled by a slow multiplicative
/// synoptic factor, plus a diurnal term whose phase shifts with altitude, plus noise.
struct WindGenOptions {
    std::vector<double> altitudes = default_altitudes();
    std::size_t hours = 960;
    /// Start of the trace, epoch seconds (2020-01-01T00:00Z).
    std::int64_t start = 1577836800;
    double log_a = 1.2;
    double z0 = 0.1;
    double diurnal_amplitude = 2.5;
    /// Altitude scale over which the diurnal phase turns by half a day.
    double diurnal_phase_scale = 1600.0;
    /// AR(1) synoptic factor: s_t = rho s_{t-1} + sqrt(1 - rho^2) sd e_t, multiplier 1 + s_t.
    double synoptic_rho = 0.97;
    double synoptic_sd = 0.15;
    double noise_sd = 0.5;

    static WindGenOptions from_json(const nlohmann::json& j);
};

WindTable synth_wind(std::uint64_t seed, const WindGenOptions& options = {});

} // namespace gpmd
