#pragma once

#include <algorithm>
#include <random>
#include <utility>
#include <vector>

#include "ecgdx/qrs.hpp"

namespace ecgdx::testing {

/// The crop acceptance rule, written out independently of the library.
inline bool accepted_by_rule(std::size_t start, std::size_t length, const qrs::MarkedRegions& regions) {
  const std::size_t end = start + length;
  for (const auto& [s, e] : regions) {
    if (e - s <= length) {
      if (start <= s && e <= end) return true;
    } else if (std::min(e, end) > std::max(s, start) &&
               10 * (std::min(e, end) - std::max(s, start)) >= 9 * length) {
      return true;
    }
  }
  return false;
}

/// Record length in [length, 6 * length] with 0-4 disjoint sorted regions,
/// some of them longer than the window.
inline std::pair<std::size_t, qrs::MarkedRegions> random_layout(std::mt19937_64& rng, std::size_t length) {
  std::uniform_int_distribution<std::size_t> len(length, 6 * length);
  const std::size_t n = len(rng);
  std::uniform_int_distribution<int> count(0, 4);
  std::uniform_int_distribution<int> kind(0, 9);
  const int k = count(rng);
  std::vector<std::size_t> cuts;
  std::uniform_int_distribution<std::size_t> pos(0, n);
  for (int i = 0; i < 2 * k; ++i) cuts.push_back(pos(rng));
  std::sort(cuts.begin(), cuts.end());
  qrs::MarkedRegions regions;
  for (int i = 0; i < k; ++i) {
    std::size_t s = cuts[2 * i], e = cuts[2 * i + 1];
    if (kind(rng) < 8) e = std::min(e, s + 50 + (e - s) % 800);  // typical beat-sized region
    if (e <= s) continue;
    if (!regions.empty() && s <= regions.back().second) continue;
    regions.emplace_back(s, e);
  }
  return {n, regions};
}

}  // namespace ecgdx::testing
