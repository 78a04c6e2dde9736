#pragma once

#include <cmath>
#include <vector>

namespace hierreconc::detail {

/// log(x!) for a nonnegative integer-valued x; tabulated for small x.
inline double log_factorial(double x) {
  static const std::vector<double> table = [] {
    std::vector<double> t(1 << 16);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::lgamma(static_cast<double>(i) + 1.0);
    return t;
  }();
  if (x < static_cast<double>(table.size())) return table[static_cast<std::size_t>(x)];
  return std::lgamma(x + 1.0);
}

}  // namespace hierreconc::detail
