#pragma once

#include <cstdio>
#include <string>

namespace postcon {

/// Shortest-safe decimal for CSV/JSON artifacts: 17 significant digits, which
/// round-trips every double. Integral values print without a decimal point.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace postcon
