#include "gpmd/energy_wind.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "gpmd/csv.hpp"
#include "gpmd/errors.hpp"
#include "gpmd/rng.hpp"

namespace gpmd {

void EnergyParams::validate() const {
    for (double v : {c1, c2, c3, v_rated, dt_minutes})
        if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError("energy parameters must be positive and finite");
}

EnergyParams EnergyParams::from_json(const nlohmann::json& j) {
    EnergyParams p;
    p.c1 = j.value("c1", p.c1);
    p.c2 = j.value("c2", p.c2);
    p.c3 = j.value("c3", p.c3);
    p.v_rated = j.value("v_rated", p.v_rated);
    p.dt_minutes = j.value("dt_minutes", p.dt_minutes);
    p.validate();
    return p;
}

nlohmann::json EnergyParams::to_json() const {
    return {{"c1", c1}, {"c2", c2}, {"c3", c3}, {"v_rated", v_rated}, {"dt_minutes", dt_minutes}};
}

double energy_service(const EnergyParams& p, double v) {
    const double vc = std::min(v, p.v_rated);
    return (p.c1 * (vc * vc * vc) - p.c2 * (v * v)) * p.dt_minutes;
}

double energy_move(const EnergyParams& p, double x, double x_prev) {
    return p.c3 * (p.v_rated * p.v_rated) * std::abs(x - x_prev);
}

FiniteMetric altitude_metric(const EnergyParams& p, const std::vector<double>& altitudes) {
    const auto n = static_cast<Eigen::Index>(altitudes.size());
    if (n == 0) throw InputError("empty altitude set");
    Eigen::MatrixXd d(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            d(i, j) = energy_move(p, altitudes[static_cast<std::size_t>(i)], altitudes[static_cast<std::size_t>(j)]);
    std::vector<std::string> labels;
    for (double a : altitudes) labels.push_back(csv::format_double(a));
    return FiniteMetric(std::move(d), std::move(labels));
}

// ---------------------------------------------------------------------------------------------
// WindTable

WindTable::WindTable(std::vector<double> altitudes, std::vector<std::int64_t> timestamps, std::vector<int> hours,
                     Eigen::MatrixXd speeds)
    : altitudes_(std::move(altitudes)), timestamps_(std::move(timestamps)), hours_(std::move(hours)),
      speeds_(std::move(speeds)) {
    if (timestamps_.size() != hours_.size() || speeds_.rows() != static_cast<Eigen::Index>(timestamps_.size()) ||
        speeds_.cols() != static_cast<Eigen::Index>(altitudes_.size()))
        throw InputError("wind table dimensions disagree");
    if (altitudes_.empty() || timestamps_.empty()) throw InputError("empty wind table");
    for (std::size_t i = 1; i < altitudes_.size(); ++i)
        if (!(altitudes_[i] > altitudes_[i - 1])) throw InputError("altitudes must be strictly increasing");
    for (std::size_t t = 1; t < timestamps_.size(); ++t)
        if (timestamps_[t] <= timestamps_[t - 1]) throw InputError("timestamps must be strictly increasing");
    for (int h : hours_)
        if (h < 0 || h > 23) throw InputError("hour out of range");
    for (Eigen::Index i = 0; i < speeds_.size(); ++i) {
        const double v = speeds_.data()[i];
        if (!std::isnan(v) && !(v >= 0.0 && std::isfinite(v))) throw InputError("windspeeds must be finite and >= 0");
    }
}

std::size_t WindTable::entries() const {
    return static_cast<std::size_t>((speeds_.array() == speeds_.array()).count());
}

bool WindTable::has(std::size_t t, std::size_t a) const {
    return t < num_times() && a < num_altitudes() &&
           !std::isnan(speeds_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(a)));
}

double WindTable::speed(std::size_t t, std::size_t a) const {
    if (!has(t, a))
        throw InputError("no windspeed for time step " + std::to_string(t) + " at altitude index " + std::to_string(a));
    return speeds_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(a));
}

std::ptrdiff_t WindTable::altitude_index(double altitude) const {
    const auto it = std::lower_bound(altitudes_.begin(), altitudes_.end(), altitude);
    if (it == altitudes_.end() || *it != altitude) return -1;
    return it - altitudes_.begin();
}

void WindTable::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "timestamp,altitude_m,windspeed_ms\n";
    for (std::size_t t = 0; t < num_times(); ++t)
        for (std::size_t a = 0; a < num_altitudes(); ++a)
            if (has(t, a))
                out << format_iso8601(timestamps_[t]) << ',' << csv::format_double(altitudes_[a]) << ','
                    << csv::format_double(speed(t, a)) << '\n';
}

std::vector<double> default_altitudes() {
    std::vector<double> out(25);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 10.0 + (1600.0 - 10.0) * static_cast<double>(i) / 24.0;
    return out;
}

// ---------------------------------------------------------------------------------------------
// Timestamps

namespace {

// Days since 1970-01-01 of a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    for (std::size_t i = pos; i < pos + len; ++i)
        if (s[i] < '0' || s[i] > '9') return false;
    std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return true;
}

} // namespace

std::pair<std::int64_t, int> parse_iso8601(const std::string& text) {
    const std::string_view s = csv::trim(text);
    const auto bad = [&] { return InputError("malformed ISO-8601 timestamp '" + std::string(s) + "'"); };
    int year = 0, mon = 0, day = 0, hh = 0, mm = 0, ss = 0;
    if (!read_int(s, 0, 4, year) || s.size() < 16 || s[4] != '-' || !read_int(s, 5, 2, mon) || s[7] != '-' ||
        !read_int(s, 8, 2, day) || (s[10] != 'T' && s[10] != ' ') || !read_int(s, 11, 2, hh) || s[13] != ':' ||
        !read_int(s, 14, 2, mm))
        throw bad();
    std::size_t pos = 16;
    if (pos < s.size() && s[pos] == ':') {
        if (!read_int(s, pos + 1, 2, ss)) throw bad();
        pos += 3;
    }
    int offset_min = 0;
    if (pos < s.size()) {
        if (s[pos] == 'Z' && pos + 1 == s.size()) {
            ++pos;
        } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
            int oh = 0, om = 0;
            if (!read_int(s, pos + 1, 2, oh) || !read_int(s, pos + 4, 2, om)) throw bad();
            offset_min = (s[pos] == '-' ? -1 : 1) * (oh * 60 + om);
            pos = s.size();
        } else {
            throw bad();
        }
    }
    static constexpr int kDays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (mon < 1 || mon > 12 || day < 1 || day > kDays[mon - 1] || hh > 23 || mm > 59 || ss > 60) throw bad();
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    if (mon == 2 && day == 29 && !leap) throw bad();
    const std::int64_t days = days_from_civil(year, static_cast<unsigned>(mon), static_cast<unsigned>(day));
    const std::int64_t epoch = days * 86400 + hh * 3600 + mm * 60 + ss - static_cast<std::int64_t>(offset_min) * 60;
    return {epoch, hh};
}

std::string format_iso8601(std::int64_t epoch_seconds) {
    std::int64_t days = epoch_seconds / 86400;
    std::int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    std::int64_t y = 0;
    unsigned m = 0, d = 0;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

// ---------------------------------------------------------------------------------------------
// Ingestion

WindTable ingest_wind_csv(const std::filesystem::path& path, const std::vector<double>& altitudes) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open wind file " + path.string());
    const std::string where = path.string() + ":";

    std::string line;
    std::size_t lineno = 0;
    // Header, skipping blank lines.
    while (std::getline(in, line)) {
        ++lineno;
        if (!csv::trim(line).empty()) break;
    }
    {
        const auto cols = csv::split_line(line);
        if (cols.size() != 3 || csv::trim(cols[0]) != "timestamp" || csv::trim(cols[1]) != "altitude_m" ||
            csv::trim(cols[2]) != "windspeed_ms")
            throw InputError(where + std::to_string(lineno) + ": expected header timestamp,altitude_m,windspeed_ms");
    }

    struct Row {
        std::int64_t ts;
        int hour;
        double alt;
        double v;
        std::size_t line;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (csv::trim(line).empty()) continue;
        const std::string at = where + std::to_string(lineno) + ": ";
        const auto cols = csv::split_line(line);
        if (cols.size() != 3) throw InputError(at + "expected 3 fields, found " + std::to_string(cols.size()));
        std::pair<std::int64_t, int> ts;
        try {
            ts = parse_iso8601(cols[0]);
        } catch (const InputError& e) {
            throw InputError(at + e.what());
        }
        const auto alt = csv::parse_double(csv::trim(cols[1]));
        const auto v = csv::parse_double(csv::trim(cols[2]));
        if (!alt || !std::isfinite(*alt)) throw InputError(at + "bad altitude '" + cols[1] + "'");
        if (!v || !std::isfinite(*v)) throw InputError(at + "bad windspeed '" + cols[2] + "'");
        if (*v < 0.0) throw InputError(at + "negative windspeed " + cols[2]);
        if (!rows.empty() && ts.first < rows.back().ts)
            throw InputError(at + "timestamp " + std::string(csv::trim(cols[0])) + " is earlier than the previous row");
        if (!altitudes.empty() && std::find(altitudes.begin(), altitudes.end(), *alt) == altitudes.end())
            throw InputError(at + "unknown altitude " + cols[1]);
        rows.push_back({ts.first, ts.second, *alt, *v, lineno});
    }
    if (rows.empty()) throw InputError(where + " wind file has no data rows");

    std::vector<double> grid = altitudes;
    if (grid.empty())
        for (const auto& r : rows) grid.push_back(r.alt);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<std::int64_t> stamps;
    std::vector<int> hours;
    for (const auto& r : rows)
        if (stamps.empty() || r.ts != stamps.back()) {
            stamps.push_back(r.ts);
            hours.push_back(r.hour);
        }
    Eigen::MatrixXd speeds = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(stamps.size()),
                                                        static_cast<Eigen::Index>(grid.size()),
                                                        std::numeric_limits<double>::quiet_NaN());
    Eigen::Index t = -1;
    std::int64_t current = std::numeric_limits<std::int64_t>::min();
    for (const auto& r : rows) {
        if (r.ts != current) {
            ++t;
            current = r.ts;
        }
        const auto a = std::lower_bound(grid.begin(), grid.end(), r.alt) - grid.begin();
        double& cell = speeds(t, a);
        if (!std::isnan(cell))
            throw InputError(where + std::to_string(r.line) + ": duplicate row for this timestamp and altitude");
        cell = r.v;
    }
    return WindTable(std::move(grid), std::move(stamps), std::move(hours), std::move(speeds));
}

// ---------------------------------------------------------------------------------------------
// Objective and bounds

Eigen::MatrixXd energy_table(const EnergyParams& p, const WindTable& wind) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(wind.num_altitudes()), static_cast<Eigen::Index>(wind.num_times()));
    for (std::size_t t = 0; t < wind.num_times(); ++t)
        for (std::size_t a = 0; a < wind.num_altitudes(); ++a)
            out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(t)) = energy_service(p, wind.speed(t, a));
    return out;
}

double service_objective(const EnergyParams& p, const WindTable& wind, std::size_t a, std::size_t t) {
    if (a >= wind.num_altitudes() || t >= wind.num_times()) throw InputError("altitude or time index out of range");
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < wind.num_altitudes(); ++b) best = std::max(best, energy_service(p, wind.speed(t, b)));
    return best - energy_service(p, wind.speed(t, a));
}

Eigen::MatrixXd service_table(const EnergyParams& p, const WindTable& wind) {
    Eigen::MatrixXd es = energy_table(p, wind);
    for (Eigen::Index t = 0; t < es.cols(); ++t) es.col(t) = es.col(t).maxCoeff() - es.col(t).array();
    return es;
}

std::pair<double, double> energy_interval(const EnergyParams& p, double lo, double hi) {
    lo = std::max(lo, 0.0);
    hi = std::max(hi, lo);
    double mn = std::min(energy_service(p, lo), energy_service(p, hi));
    double mx = std::max(energy_service(p, lo), energy_service(p, hi));
    for (double v : {p.v_rated, 2.0 * p.c2 / (3.0 * p.c1)}) {
        if (v > lo && v < hi) {
            const double e = energy_service(p, v);
            mn = std::min(mn, e);
            mx = std::max(mx, e);
        }
    }
    return {mn, mx};
}

CostBounds propagate_bounds(const EnergyParams& p, const Eigen::VectorXd& mean, const Eigen::VectorXd& stdev,
                            double beta) {
    if (mean.size() != stdev.size() || mean.size() == 0) throw DomainError("posterior vectors differ in size");
    const auto n = static_cast<std::size_t>(mean.size());
    std::vector<double> es_lo(n), es_hi(n);
    double c = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a) {
        const auto i = static_cast<Eigen::Index>(a);
        const auto [mn, mx] = energy_interval(p, mean(i) - beta * stdev(i), mean(i) + beta * stdev(i));
        es_lo[a] = mn;
        es_hi[a] = mx;
        c = std::max(c, mx);
    }
    CostBounds out;
    out.offset = c;
    out.lcb.resize(n);
    out.ucb.resize(n);
    for (std::size_t a = 0; a < n; ++a) {
        out.lcb[a] = std::max(0.0, c - es_hi[a]);
        out.ucb[a] = c - es_lo[a];
    }
    return out;
}

CostBounds propagate_bounds(const GpModel& gp, const EnergyParams& p, const std::vector<double>& altitudes, int hour,
                            double beta, double prior_mean) {
    Eigen::MatrixXd inputs(static_cast<Eigen::Index>(altitudes.size()), 2);
    for (std::size_t a = 0; a < altitudes.size(); ++a)
        inputs.row(static_cast<Eigen::Index>(a)) << altitudes[a], static_cast<double>(hour);
    const auto [mu, sd] = gp.posterior_batch(inputs, prior_mean);
    return propagate_bounds(p, mu, sd, beta);
}

// ---------------------------------------------------------------------------------------------
// Synthetic wind

WindGenOptions WindGenOptions::from_json(const nlohmann::json& j) {
    WindGenOptions o;
    if (j.contains("altitudes")) o.altitudes = j["altitudes"].get<std::vector<double>>();
    o.hours = j.value("hours", o.hours);
    o.start = j.value("start", o.start);
    o.log_a = j.value("log_a", o.log_a);
    o.z0 = j.value("z0", o.z0);
    o.diurnal_amplitude = j.value("diurnal_amplitude", o.diurnal_amplitude);
    o.diurnal_phase_scale = j.value("diurnal_phase_scale", o.diurnal_phase_scale);
    o.synoptic_rho = j.value("synoptic_rho", o.synoptic_rho);
    o.synoptic_sd = j.value("synoptic_sd", o.synoptic_sd);
    o.noise_sd = j.value("noise_sd", o.noise_sd);
    return o;
}

WindTable synth_wind(std::uint64_t seed, const WindGenOptions& o) {
    if (o.altitudes.empty() || o.hours == 0) throw ParameterError("synthetic wind needs altitudes and hours");
    if (!(o.z0 > 0.0)) throw ParameterError("roughness length must be positive");
    for (double a : o.altitudes)
        if (!(a > o.z0)) throw ParameterError("altitudes must exceed the roughness length");
    std::vector<double> alts = o.altitudes;
    std::sort(alts.begin(), alts.end());

    constexpr double kPi = 3.14159265358979323846;
    Rng rng = make_stream(seed, Stream::Wind);
    const auto na = static_cast<Eigen::Index>(alts.size());
    const auto nt = static_cast<Eigen::Index>(o.hours);
    Eigen::MatrixXd speeds(nt, na);
    std::vector<std::int64_t> stamps(o.hours);
    std::vector<int> hours(o.hours);
    double synoptic = o.synoptic_sd * standard_normal(rng);
    const double innov = std::sqrt(std::max(0.0, 1.0 - o.synoptic_rho * o.synoptic_rho)) * o.synoptic_sd;
    for (Eigen::Index t = 0; t < nt; ++t) {
        stamps[static_cast<std::size_t>(t)] = o.start + 3600 * t;
        const int hour = static_cast<int>(((o.start / 3600 + t) % 24 + 24) % 24);
        hours[static_cast<std::size_t>(t)] = hour;
        if (t > 0) synoptic = o.synoptic_rho * synoptic + innov * standard_normal(rng);
        for (Eigen::Index a = 0; a < na; ++a) {
            const double x = alts[static_cast<std::size_t>(a)];
            const double phase = kPi * x / o.diurnal_phase_scale;
            const double diurnal = o.diurnal_amplitude * std::sin(2.0 * kPi * hour / 24.0 + phase);
            const double v = o.log_a * std::log(x / o.z0) * (1.0 + synoptic) + diurnal + o.noise_sd * standard_normal(rng);
            speeds(t, a) = std::max(0.0, v);
        }
    }
    return WindTable(std::move(alts), std::move(stamps), std::move(hours), std::move(speeds));
}

} // namespace gpmd
