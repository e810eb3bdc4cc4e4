#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ecgdx/core.hpp"

namespace ecgdx::qrs {

/// Landmarks of one beat as sample indices. P and T landmarks are absent when
/// the wave could not be found; they are never guessed.
struct Beat {
  std::optional<std::size_t> p_onset;
  std::optional<std::size_t> p_peak;
  std::size_t qrs_onset = 0;
  std::size_t r_peak = 0;
  std::size_t qrs_offset = 0;
  std::optional<std::size_t> t_peak;
  std::optional<std::size_t> t_offset;

  bool has_p() const { return p_onset.has_value(); }
};

struct Fiducials {
  int sample_rate_hz = 500;
  std::size_t n_samples = 0;
  std::vector<Beat> beats;

  /// Beats whose QRS lies inside [start, start + length), re-indexed to the
  /// window. P/T landmarks that fall outside the window are dropped.
  Fiducials window(std::size_t start, std::size_t length) const;
};

/// Sorted, disjoint [start, end) sample intervals.
using Interval = std::pair<std::size_t, std::size_t>;
using MarkedRegions = std::vector<Interval>;

// Detector constants.
inline constexpr double kBandLoHz = 5.0;
inline constexpr double kBandHiHz = 15.0;
inline constexpr double kIntegrationWindowS = 0.150;
inline constexpr double kRefractoryS = 0.200;
inline constexpr double kRefineWindowS = 0.050;

// Irregularity rules.
inline constexpr double kPrematureRatio = 0.8;
inline constexpr double kWideQrsMs = 120.0;
inline constexpr double kRegionPadS = 0.250;

/// Pan-Tompkins stages exposed for inspection: band-pass, derivative,
/// squaring and moving-window integration of one lead.
std::vector<double> integrated_energy(std::span<const double> lead, double fs);

/// Which lead feeds the detector: II, else V2, else the lead with the largest
/// variance. Throws FlatSignal when every lead is flat.
std::size_t detection_lead(const EcgRecord& record);

/// R-peak sample indices, strictly increasing with gaps >= 200 ms.
/// Throws SignalTooShort below 2 s and FlatSignal on a flat record.
std::vector<std::size_t> detect_r_peaks(const EcgRecord& record);

/// Throws TooFewPeaks when `r_peaks` is empty.
Fiducials delineate(const EcgRecord& record, std::span<const std::size_t> r_peaks);

/// Consecutive R-R intervals in milliseconds. Throws TooFewPeaks below 2 peaks.
std::vector<double> rr_intervals(std::span<const std::size_t> r_peaks, double fs);

/// Beats flagged by prematurity, wide QRS or a missing P wave.
std::vector<std::size_t> irregular_beats(const Fiducials& fiducials);

MarkedRegions mark_irregular(const EcgRecord& record, const Fiducials& fiducials);

/// True when `regions` is sorted, disjoint, non-empty per interval and within [0, n).
bool regions_valid(const MarkedRegions& regions, std::size_t n);

/// Merges overlapping or touching intervals after sorting.
MarkedRegions merge_intervals(MarkedRegions intervals);

}  // namespace ecgdx::qrs
