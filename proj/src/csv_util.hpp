#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "lfbit/error.hpp"

namespace lfbit::detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

inline bool is_blank(std::string_view line) { return trim(line).empty(); }

inline double parse_double(std::string_view field, const std::string& where) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    fail(ErrorKind::parse, where + ": not a number: '" + std::string(field) + "'");
  return value;
}

inline long long parse_int(std::string_view field, const std::string& where) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    fail(ErrorKind::parse, where + ": not an integer: '" + std::string(field) + "'");
  return value;
}

inline std::string line_ref(const std::string& source, int line_no) {
  return source + " line " + std::to_string(line_no);
}

}  // namespace lfbit::detail
