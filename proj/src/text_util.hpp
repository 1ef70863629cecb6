#pragma once

// Small formatting/parsing helpers shared by the CSV and config readers.

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "tgfuse/errors.hpp"

namespace tgfuse::text {

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

/// Shortest-round-trip-safe rendering of a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline double parse_double(std::string_view s, const std::string& what) {
  s = trim(s);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(std::string(s), &used);
  } catch (const std::exception&) {
    throw InputError(what + ": not a number: '" + std::string(s) + "'");
  }
  if (used != s.size()) throw InputError(what + ": trailing characters in '" + std::string(s) + "'");
  return v;
}

inline std::size_t parse_size(std::string_view s, const std::string& what) {
  s = trim(s);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError(what + ": not a non-negative integer: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace tgfuse::text
