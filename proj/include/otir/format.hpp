#pragma once

#include <charconv>
#include <string>

namespace otir {

/// Shortest round-trip decimal, so text outputs are byte-stable.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace otir
