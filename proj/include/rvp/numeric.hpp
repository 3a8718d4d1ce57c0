#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

namespace rvp {

// Fractions of a population are turned into record counts here and nowhere
// else. The slack absorbs representation error such as 0.15 * 10000 landing
// one ulp above 1500.
inline constexpr double kCountSlack = 1e-9;

inline std::size_t count_floor(double fraction, std::size_t n) {
  const double x = fraction * static_cast<double>(n);
  if (!(x > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(x + kCountSlack));
}

inline std::size_t count_ceil(double fraction, std::size_t n) {
  const double x = fraction * static_cast<double>(n);
  if (!(x > 0.0)) return 0;
  return static_cast<std::size_t>(std::ceil(x - kCountSlack));
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Strict parse: the whole (trimmed) field must be a finite number.
inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace rvp
