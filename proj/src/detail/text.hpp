#pragma once

// Value parsing and formatting for key=value text (config files, model headers).

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace setsum::detail {

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char separator);

// Shortest text that parses back to the identical double.
std::string format_double(double value);

// Each parser throws std::invalid_argument describing the expected form.
double parse_double(std::string_view text);
std::uint64_t parse_uint(std::string_view text);
bool parse_bool(std::string_view text);
std::vector<std::size_t> parse_size_list(std::string_view text);
std::vector<double> parse_double_list(std::string_view text);
// "a:b,c:d" -> {(a,b),(c,d)}; empty text -> {}.
std::vector<std::pair<std::size_t, std::size_t>> parse_pair_list(std::string_view text);

std::string join_sizes(const std::vector<std::size_t>& values);
std::string join_doubles(const std::vector<double>& values);

}  // namespace setsum::detail
