#pragma once

#include <cstdio>
#include <string>

namespace dmap::io {

/// Fixed-point text with `decimals` digits; negative zero prints as zero.
inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos)
    s.erase(0, 1);
  return s;
}

/// Coordinates are written with nine decimals (1e-9 degree resolution).
inline std::string format_coord(double degrees) { return format_fixed(degrees, 9); }

} // namespace dmap::io
