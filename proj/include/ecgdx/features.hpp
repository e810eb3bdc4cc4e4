#pragma once

#include <array>
#include <string_view>

#include "ecgdx/core.hpp"
#include "ecgdx/qrs.hpp"

namespace ecgdx::features {

inline constexpr std::size_t kNumFeatures = 20;

/// Column order: interval statistics (QRS width, PR, RR, RMSSD, share of beats
/// without a P wave) followed by the standard deviation of each lead.
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "qrs_mean_ms", "qrs_std_ms", "pr_mean_ms", "pr_std_ms",  "rr_mean_ms",
    "rr_std_ms",   "rr_rmssd_ms", "p_absent_frac", "std_I",  "std_II",
    "std_III",     "std_aVR",     "std_aVL",       "std_aVF", "std_V1",
    "std_V2",      "std_V3",      "std_V4",        "std_V5",  "std_V6"};

using FeatureVector = std::array<double, kNumFeatures>;
using FeatureMask = std::array<bool, kNumFeatures>;

/// Interval statistics need at least two beats; below that they are 0.
/// Lead standard deviations always come from the whole signal.
FeatureVector extract_features(const EcgRecord& record, const qrs::Fiducials& fiducials);

/// Entries `extract_features` could not measure (and left at 0).
FeatureMask missing_features(const qrs::Fiducials& fiducials);

/// Per-feature mean and standard deviation for z-scoring. Missing entries are
/// left out of the fit and map to 0.
struct Standardizer {
  FeatureVector mean{};
  FeatureVector std{};

  static Standardizer fit(std::span<const FeatureVector> rows, std::span<const FeatureMask> missing = {});
  FeatureVector apply(const FeatureVector& x, const FeatureMask& missing = {}) const;
};

}  // namespace ecgdx::features
