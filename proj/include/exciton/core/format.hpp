#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace exlab {

/// Shortest-safe decimal: 17 significant digits, round-trips every double.
inline std::string format_double(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  if (res.ec != std::errc{}) return "nan";
  return std::string(buf, res.ptr);
}

}  // namespace exlab
