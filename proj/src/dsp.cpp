#include "ecgdx/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace ecgdx::dsp {

namespace {

constexpr std::array<double, 8> kDb4Lo = {
    -0.010597401784997278, 0.032883011666982945, 0.030841381835986965, -0.18703481171888114,
    -0.02798376941698385,  0.6308807679295904,   0.7148465705525415,   0.23037781330885523};

constexpr std::size_t kTaps = kDb4Lo.size();

constexpr std::array<double, kTaps> make_hi() {
  std::array<double, kTaps> hi{};
  for (std::size_t j = 0; j < kTaps; ++j) {
    const double v = kDb4Lo[kTaps - 1 - j];
    hi[j] = (j % 2 == 0) ? -v : v;
  }
  return hi;
}

constexpr std::array<double, kTaps> kDb4Hi = make_hi();

// Half-sample symmetric extension: x[-1] = x[0], x[n] = x[n-1].
std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

std::size_t band_length(std::size_t n) { return (n + kTaps - 1) / 2; }

void analysis_step(std::span<const double> x, std::vector<double>& approx,
                   std::vector<double>& detail) {
  const auto n = std::ptrdiff_t(x.size());
  const std::size_t m = band_length(x.size());
  approx.assign(m, 0.0);
  detail.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double a = 0.0, d = 0.0;
    const std::ptrdiff_t centre = 2 * std::ptrdiff_t(k) + 1;
    for (std::size_t j = 0; j < kTaps; ++j) {
      const double v = x[std::size_t(reflect(centre - std::ptrdiff_t(j), n))];
      a += kDb4Lo[j] * v;
      d += kDb4Hi[j] * v;
    }
    approx[k] = a;
    detail[k] = d;
  }
}

// Inverse of analysis_step for an output of `n` samples.
std::vector<double> synthesis_step(std::span<const double> approx, std::span<const double> detail,
                                   std::size_t n) {
  std::vector<double> out(n, 0.0);
  const auto m = std::ptrdiff_t(approx.size());
  const auto taps = std::ptrdiff_t(kTaps);
  for (std::size_t i = 0; i < n; ++i) {
    const std::ptrdiff_t pos = std::ptrdiff_t(i) + taps - 2;
    const std::ptrdiff_t k_lo = std::max<std::ptrdiff_t>(0, (pos - (taps - 1) + 1) / 2);
    const std::ptrdiff_t k_hi = std::min<std::ptrdiff_t>(m - 1, pos / 2);
    double acc = 0.0;
    for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k) {
      const std::ptrdiff_t g = pos - 2 * k;
      if (g < 0 || g >= taps) continue;
      // Synthesis filters are time reversals of the analysis filters.
      const std::size_t h = std::size_t(taps - 1 - g);
      acc += approx[std::size_t(k)] * kDb4Lo[h] + detail[std::size_t(k)] * kDb4Hi[h];
    }
    out[i] = acc;
  }
  return out;
}

double median_abs(std::span<const double> v) {
  std::vector<double> a(v.size());
  std::transform(v.begin(), v.end(), a.begin(), [](double x) { return std::abs(x); });
  if (a.empty()) return 0.0;
  const auto mid = a.begin() + std::ptrdiff_t(a.size() / 2);
  std::nth_element(a.begin(), mid, a.end());
  if (a.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(a.begin(), mid);
  return 0.5 * (lower + upper);
}

// Soft-threshold risk estimate (SURE) minimised over the band's own magnitudes.
double sure_threshold(std::span<const double> band, double sigma) {
  const std::size_t n = band.size();
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::abs(band[i]) / sigma;
  std::sort(a.begin(), a.end());
  double best = std::numeric_limits<double>::infinity(), threshold = 0.0, cum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += a[k] * a[k];
    const double risk = double(n) - 2.0 * double(k + 1) + cum + double(n - k - 1) * a[k] * a[k];
    if (risk < best) {
      best = risk;
      threshold = a[k];
    }
  }
  return threshold * sigma;
}

// Hybrid rule: sparse bands keep the universal threshold, the others use the
// smaller of SURE and universal.
double band_threshold(std::span<const double> band, double sigma) {
  if (band.empty() || !(sigma > 0.0)) return 0.0;
  const double n = double(band.size());
  const double universal = sigma * std::sqrt(2.0 * std::log(n));
  double energy = 0.0;
  for (double d : band) energy += d * d;
  const double eta = (energy / (sigma * sigma) - n) / n;
  const double sparse_bound = std::pow(std::log2(n), 1.5) / std::sqrt(n);
  if (eta < sparse_bound) return universal;
  return std::min(sure_threshold(band, sigma), universal);
}

}  // namespace

std::span<const double> db4_lowpass() { return kDb4Lo; }

WaveletCoeffs dwt_forward(std::span<const double> signal, int levels) {
  if (levels < 1) throw Error(ErrorCode::SignalTooShort, "levels must be >= 1");
  if (signal.size() < (std::size_t(1) << levels)) {
    throw Error(ErrorCode::SignalTooShort, "length " + std::to_string(signal.size()) +
                                               " too short for " + std::to_string(levels) +
                                               " levels");
  }
  WaveletCoeffs c;
  c.levels = levels;
  c.original_length = signal.size();
  std::vector<double> current(signal.begin(), signal.end());
  for (int l = 0; l < levels; ++l) {
    std::vector<double> approx, detail;
    analysis_step(current, approx, detail);
    c.details.push_back(std::move(detail));
    current = std::move(approx);
  }
  c.approximation = std::move(current);
  return c;
}

std::vector<double> dwt_inverse(const WaveletCoeffs& coeffs) {
  if (coeffs.levels < 1 || coeffs.details.size() != std::size_t(coeffs.levels)) {
    throw Error(ErrorCode::CorruptedCoeffs, "level count does not match detail bands");
  }
  // Recompute the expected band sizes from the original length.
  std::vector<std::size_t> lengths{coeffs.original_length};
  for (int l = 0; l < coeffs.levels; ++l) lengths.push_back(band_length(lengths.back()));
  for (int l = 0; l < coeffs.levels; ++l) {
    if (coeffs.details[std::size_t(l)].size() != lengths[std::size_t(l) + 1]) {
      throw Error(ErrorCode::CorruptedCoeffs, "detail band " + std::to_string(l + 1) +
                                                  " has wrong size");
    }
  }
  if (coeffs.approximation.size() != lengths.back()) {
    throw Error(ErrorCode::CorruptedCoeffs, "approximation band has wrong size");
  }
  std::vector<double> current = coeffs.approximation;
  for (int l = coeffs.levels - 1; l >= 0; --l) {
    current = synthesis_step(current, coeffs.details[std::size_t(l)], lengths[std::size_t(l)]);
  }
  return current;
}

std::vector<double> denoise_lead(std::span<const double> signal, int levels) {
  // Short inputs cannot support the full depth; use what fits.
  int depth = levels;
  while (depth > 1 && signal.size() < (std::size_t(1) << depth)) --depth;
  if (signal.size() < 2) return {signal.begin(), signal.end()};

  WaveletCoeffs c = dwt_forward(signal, depth);
  std::fill(c.approximation.begin(), c.approximation.end(), 0.0);
  const double sigma = median_abs(c.details.front()) / 0.6745;
  for (auto& band : c.details) {
    const double threshold = band_threshold(band, sigma);
    for (double& d : band) {
      const double mag = std::abs(d) - threshold;
      d = mag > 0.0 ? std::copysign(mag, d) : 0.0;
    }
  }
  return dwt_inverse(c);
}

EcgRecord denoise(const EcgRecord& record) {
  std::vector<float> out(record.data().size());
  const std::size_t n = record.n_samples();
  for (std::size_t l = 0; l < kNumLeads; ++l) {
    const auto clean = denoise_lead(to_double(record.lead(l)));
    std::transform(clean.begin(), clean.end(), out.begin() + std::ptrdiff_t(l * n),
                   [](double v) { return float(v); });
  }
  return EcgRecord(record.id(), record.sample_rate_hz(), n, std::move(out));
}

std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

// ------------------------------------------------------------------ filters

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

// RBJ cookbook sections; with the Butterworth pole Qs the cascade is an exact
// bilinear-transformed Butterworth filter.
Biquad design_section(bool highpass, double f0, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * f0 / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad s{};
  if (highpass) {
    s.b0 = (1.0 + cw) / 2.0 / a0;
    s.b1 = -(1.0 + cw) / a0;
  } else {
    s.b0 = (1.0 - cw) / 2.0 / a0;
    s.b1 = (1.0 - cw) / a0;
  }
  s.b2 = s.b0;
  s.a1 = -2.0 * cw / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

constexpr int kButterworthOrder = 6;

std::vector<Biquad> design_bandpass(double lo, double hi, double fs) {
  std::vector<Biquad> sections;
  for (bool hp : {true, false}) {
    for (int k = 1; k <= kButterworthOrder / 2; ++k) {
      const double theta = (2.0 * k - 1.0) * std::numbers::pi / (2.0 * kButterworthOrder);
      const double q = 1.0 / (2.0 * std::cos(theta));
      sections.push_back(design_section(hp, hp ? lo : hi, fs, q));
    }
  }
  return sections;
}

// Runs the cascade once, starting each section in the steady state it would
// reach for a constant input equal to x[0].
void run_cascade(const std::vector<Biquad>& sections, std::vector<double>& x) {
  double level = x.front();
  for (const auto& s : sections) {
    const double y_ss = s.dc_gain() * level;
    double z2 = s.b2 * level - s.a2 * y_ss;
    double z1 = s.b1 * level - s.a1 * y_ss + z2;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    level = y_ss;
  }
}

}  // namespace

std::vector<double> bandpass(std::span<const double> signal, double lo_hz, double hi_hz,
                             double fs_hz) {
  if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs_hz / 2.0)) {
    throw Error(ErrorCode::InvalidBand, "need 0 < lo < hi < fs/2");
  }
  if (signal.empty()) return {};
  const auto sections = design_bandpass(lo_hz, hi_hz, fs_hz);

  const std::size_t n = signal.size();
  const std::size_t pad = std::min<std::size_t>(n - 1, std::size_t(std::ceil(3.0 * fs_hz / lo_hz)));
  // Odd extension around both end points.
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  run_cascade(sections, ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(sections, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + std::ptrdiff_t(pad), ext.begin() + std::ptrdiff_t(pad + n)};
}

}  // namespace ecgdx::dsp
