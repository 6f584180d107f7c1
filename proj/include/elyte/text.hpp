#pragma once

#include <charconv>
#include <string>
#include <system_error>

#include "elyte/errors.hpp"

namespace elyte {

// Shortest decimal form that parses back to the identical double; keeps CSV
// and JSON artifacts byte-stable across runs.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Full-string strict parse; throws SchemaError naming `what` otherwise.
inline double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw SchemaError(what + " is not a number: \"" + text + "\"");
  return v;
}

}  // namespace elyte
