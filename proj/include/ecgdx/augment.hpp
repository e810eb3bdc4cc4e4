#pragma once

#include <array>
#include <cstddef>
#include <random>

#include "ecgdx/core.hpp"
#include "ecgdx/qrs.hpp"

namespace ecgdx::augment {

inline constexpr std::size_t kDefaultCropLength = 4096;
inline constexpr int kMaxRejections = 100;
inline constexpr double kLongRegionOverlap = 0.9;

struct CropWindow {
  std::size_t start = 0;
  std::size_t length = 0;

  std::size_t end() const { return start + length; }
  bool operator==(const CropWindow&) const = default;
};

/// Positive-label loss weights aligned with `LabelVector`.
using ClassWeights = std::array<double, kNumLabels>;
using LabelMask = std::array<bool, kNumLabels>;

/// w_i = T / (9 c_i). Throws ZeroCount when a label has no positives.
ClassWeights class_weights(const Dataset& dataset);

/// Same rule restricted to the labels in `active` (K of them): w_i = T / (K c_i);
/// inactive labels get weight 1.
ClassWeights class_weights(const Dataset& dataset, const LabelMask& active);
ClassWeights class_weights(const std::array<std::size_t, kNumLabels>& counts, std::size_t total,
                           const LabelMask& active);

/// A window is accepted when it contains a whole region, or, for a region
/// longer than the window, covers at least 90% of the window with it.
bool window_accepted(const CropWindow& window, const qrs::MarkedRegions& regions);

/// Heuristic crop: uniform windows are drawn until one is accepted; after 100
/// rejections a window around a randomly chosen region is built directly.
/// Without regions the first uniform draw is returned. Throws RecordTooShort
/// when `n_samples < length`.
CropWindow mark_and_crop(std::size_t n_samples, const qrs::MarkedRegions& regions,
                         std::size_t length, std::mt19937_64& rng);
CropWindow mark_and_crop(const EcgRecord& record, const qrs::MarkedRegions& regions,
                         std::size_t length, std::mt19937_64& rng);

/// Uniform random window, ignoring regions.
CropWindow random_crop(std::size_t n_samples, std::size_t length, std::mt19937_64& rng);

/// Centre window used for evaluation (start = (N - length) / 2); start 0 when
/// the record is shorter than `length`.
CropWindow centre_window(std::size_t n_samples, std::size_t length);

/// Right-pads short records with zeros, centre-crops long ones.
EcgRecord pad_or_crop(const EcgRecord& record, std::size_t length);

}  // namespace ecgdx::augment
