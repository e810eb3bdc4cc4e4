#include "ecgdx/augment.hpp"

#include <algorithm>

namespace ecgdx::augment {

ClassWeights class_weights(const std::array<std::size_t, kNumLabels>& counts, std::size_t total,
                           const LabelMask& active) {
  const auto k = std::count(active.begin(), active.end(), true);
  if (k == 0) throw Error(ErrorCode::ZeroCount, "no active labels");
  ClassWeights w{};
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (!active[i]) {
      w[i] = 1.0;
      continue;
    }
    if (counts[i] == 0) {
      throw Error(ErrorCode::ZeroCount, "label " + std::string(kLabelNames[i]) + " has no positives");
    }
    w[i] = double(total) / (double(k) * double(counts[i]));
  }
  return w;
}

ClassWeights class_weights(const Dataset& dataset, const LabelMask& active) {
  return class_weights(dataset.label_counts(), dataset.size(), active);
}

ClassWeights class_weights(const Dataset& dataset) {
  LabelMask all;
  all.fill(true);
  return class_weights(dataset, all);
}

bool window_accepted(const CropWindow& window, const qrs::MarkedRegions& regions) {
  for (const auto& [s, e] : regions) {
    if (e - s <= window.length) {
      if (window.start <= s && e <= window.end()) return true;
    } else {
      const std::size_t lo = std::max(s, window.start);
      const std::size_t hi = std::min(e, window.end());
      if (hi > lo && double(hi - lo) >= kLongRegionOverlap * double(window.length)) return true;
    }
  }
  return false;
}

CropWindow random_crop(std::size_t n_samples, std::size_t length, std::mt19937_64& rng) {
  if (length == 0 || n_samples < length) {
    throw Error(ErrorCode::RecordTooShort, std::to_string(n_samples) + " samples < crop length " +
                                               std::to_string(length));
  }
  std::uniform_int_distribution<std::size_t> start(0, n_samples - length);
  return {start(rng), length};
}

CropWindow mark_and_crop(std::size_t n_samples, const qrs::MarkedRegions& regions,
                         std::size_t length, std::mt19937_64& rng) {
  CropWindow w = random_crop(n_samples, length, rng);
  if (regions.empty()) return w;
  for (int attempt = 1; attempt < kMaxRejections && !window_accepted(w, regions); ++attempt) {
    w = random_crop(n_samples, length, rng);
  }
  if (window_accepted(w, regions)) return w;

  std::uniform_int_distribution<std::size_t> pick(0, regions.size() - 1);
  const auto [s, e] = regions[pick(rng)];
  std::size_t lo, hi;
  if (e - s <= length) {
    lo = e > length ? e - length : 0;
    hi = std::min(s, n_samples - length);
  } else {
    lo = s;
    hi = std::min(e, n_samples) - length;
  }
  std::uniform_int_distribution<std::size_t> start(lo, std::max(lo, hi));
  return {start(rng), length};
}

CropWindow mark_and_crop(const EcgRecord& record, const qrs::MarkedRegions& regions,
                         std::size_t length, std::mt19937_64& rng) {
  return mark_and_crop(record.n_samples(), regions, length, rng);
}

CropWindow centre_window(std::size_t n_samples, std::size_t length) {
  if (n_samples <= length) return {0, n_samples};
  return {(n_samples - length) / 2, length};
}

EcgRecord pad_or_crop(const EcgRecord& record, std::size_t length) {
  const std::size_t n = record.n_samples();
  if (n == length) return record;
  if (n > length) return record.slice((n - length) / 2, length);
  std::vector<float> out(kNumLeads * length, 0.0f);
  for (std::size_t l = 0; l < kNumLeads; ++l) {
    const auto src = record.lead(l);
    std::copy(src.begin(), src.end(), out.begin() + std::ptrdiff_t(l * length));
  }
  return EcgRecord(record.id(), record.sample_rate_hz(), length, std::move(out));
}

}  // namespace ecgdx::augment
