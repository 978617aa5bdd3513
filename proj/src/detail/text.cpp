#include "detail/text.hpp"

#include <cctype>
#include <charconv>
#include <stdexcept>

namespace setsum::detail {

std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(begin, end - begin));
}

std::vector<std::string> split(std::string_view text, char separator) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(separator, start);
    if (pos == std::string_view::npos) {
      parts.push_back(trim(text.substr(start)));
      return parts;
    }
    parts.push_back(trim(text.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

double parse_double(std::string_view text) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto result = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || result.ec != std::errc() || result.ptr != t.data() + t.size()) {
    throw std::invalid_argument("expected a number, got '" + t + "'");
  }
  return value;
}

std::uint64_t parse_uint(std::string_view text) {
  const std::string t = trim(text);
  std::uint64_t value = 0;
  const auto result = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || result.ec != std::errc() || result.ptr != t.data() + t.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + t + "'");
  }
  return value;
}

bool parse_bool(std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw std::invalid_argument("expected true or false, got '" + t + "'");
}

std::vector<std::size_t> parse_size_list(std::string_view text) {
  std::vector<std::size_t> values;
  if (trim(text).empty()) return values;
  for (const std::string& part : split(text, ',')) {
    values.push_back(static_cast<std::size_t>(parse_uint(part)));
  }
  return values;
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> values;
  if (trim(text).empty()) return values;
  for (const std::string& part : split(text, ',')) values.push_back(parse_double(part));
  return values;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_pair_list(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (trim(text).empty()) return pairs;
  for (const std::string& part : split(text, ',')) {
    const std::vector<std::string> ab = split(part, ':');
    if (ab.size() != 2) throw std::invalid_argument("expected a:b pairs, got '" + part + "'");
    pairs.emplace_back(parse_uint(ab[0]), parse_uint(ab[1]));
  }
  return pairs;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ",";
    out += format_double(values[i]);
  }
  return out;
}

}  // namespace setsum::detail
