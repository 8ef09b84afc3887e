#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gpmd::csv {

std::vector<std::string> split_line(std::string_view line);

std::string_view trim(std::string_view s);

/// Strict full-string parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view s);

/// Shortest round-tripping decimal representation.
std::string format_double(double v);

} // namespace gpmd::csv
