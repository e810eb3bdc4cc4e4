#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace ecgdx::testing {

/// Kolmogorov-Smirnov statistic of integer samples against the discrete
/// uniform distribution on {0, ..., max}.
inline double ks_uniform_statistic(std::span<const std::size_t> samples, std::size_t max) {
  std::vector<std::size_t> counts(max + 1, 0);
  for (auto s : samples) ++counts.at(s);
  double d = 0, cum = 0;
  const double n = double(samples.size());
  for (std::size_t k = 0; k <= max; ++k) {
    cum += double(counts[k]);
    d = std::max(d, std::abs(cum / n - double(k + 1) / double(max + 1)));
  }
  return d;
}

/// Asymptotic one-sample critical value at alpha = 0.01.
inline double ks_critical_001(std::size_t n) { return 1.6276 / std::sqrt(double(n)); }

}  // namespace ecgdx::testing
