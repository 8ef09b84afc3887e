#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace gpmd {

using Rng = std::mt19937_64;

/// Named RNG streams derived from one run seed.
enum class Stream : std::uint64_t {
    Frt = 1,
    Noise = 2,
    Coupling = 3,
    Context = 4,
    Instance = 5,
    Start = 6,
    Wind = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline Rng make_stream(std::uint64_t seed, Stream stream, std::uint64_t salt = 0) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ static_cast<std::uint64_t>(stream));
    s = splitmix64(s ^ salt);
    return Rng(s);
}

inline double uniform01(Rng& rng) {
    // 53-bit mantissa draw in [0, 1); std::uniform_real_distribution is fine too but this is
    // identical across standard libraries.
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
    // Box-Muller; portable across standard library implementations.
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

} // namespace gpmd
