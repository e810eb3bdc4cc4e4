#pragma once

#include <span>
#include <vector>

#include "ecgdx/core.hpp"

namespace ecgdx::dsp {

/// Multi-level Daubechies-4 decomposition with symmetric boundary extension.
///
/// `details[0]` is the finest band (d1); `details.back()` is the deepest.
struct WaveletCoeffs {
  int levels = 0;
  std::vector<std::vector<double>> details;
  std::vector<double> approximation;
  std::size_t original_length = 0;
};

/// Orthogonal db4 analysis low-pass filter (8 taps).
std::span<const double> db4_lowpass();

WaveletCoeffs dwt_forward(std::span<const double> signal, int levels);
std::vector<double> dwt_inverse(const WaveletCoeffs& coeffs);

inline constexpr int kDenoiseLevels = 8;

/// Per-lead wavelet denoising: the deepest approximation band is zeroed
/// (baseline removal) and each detail band is soft-thresholded. The noise
/// level is sigma = median(|d1|) / 0.6745; the threshold of a band with n
/// coefficients is sigma * sqrt(2 ln n) when the band looks like pure noise,
/// otherwise the SURE minimiser capped at that value.
EcgRecord denoise(const EcgRecord& record);
std::vector<double> denoise_lead(std::span<const double> signal, int levels = kDenoiseLevels);

/// Zero-phase Butterworth band-pass (6th-order high-pass at `lo_hz` cascaded
/// with 6th-order low-pass at `hi_hz`, run forward and backward).
std::vector<double> bandpass(std::span<const double> signal, double lo_hz, double hi_hz,
                             double fs_hz);

std::vector<double> to_double(std::span<const float> x);

}  // namespace ecgdx::dsp
