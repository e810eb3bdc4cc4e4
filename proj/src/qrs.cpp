#include "ecgdx/qrs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecgdx/dsp.hpp"

namespace ecgdx::qrs {

namespace {

std::size_t samples(double seconds, double fs) { return std::size_t(std::lround(seconds * fs)); }

double variance(std::span<const float> x) {
  if (x.empty()) return 0.0;
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= double(x.size());
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  return var / double(x.size());
}

// Centred moving average over `width` samples, shrinking at the edges.
std::vector<double> moving_average(std::span<const double> x, std::size_t width) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  const std::size_t half = width / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + (width - half));
    out[i] = (prefix[hi] - prefix[lo]) / double(hi - lo);
  }
  return out;
}

double median_of(std::span<const float> x) {
  std::vector<float> v(x.begin(), x.end());
  if (v.empty()) return 0.0;
  auto mid = v.begin() + std::ptrdiff_t(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

struct Candidate {
  std::size_t index;
  double value;
};

constexpr double kFlatStdMv = 1e-4;

}  // namespace

Fiducials Fiducials::window(std::size_t start, std::size_t length) const {
  Fiducials out{sample_rate_hz, length, {}};
  const std::size_t end = start + length;
  const auto inside = [&](std::optional<std::size_t> v) -> std::optional<std::size_t> {
    if (v && *v >= start && *v < end) return *v - start;
    return std::nullopt;
  };
  for (const auto& b : beats) {
    if (b.qrs_onset < start || b.qrs_offset >= end) continue;
    Beat w;
    w.qrs_onset = b.qrs_onset - start;
    w.r_peak = b.r_peak - start;
    w.qrs_offset = b.qrs_offset - start;
    w.p_onset = inside(b.p_onset);
    w.p_peak = inside(b.p_peak);
    if (!w.p_onset || !w.p_peak) w.p_onset = w.p_peak = std::nullopt;
    w.t_peak = inside(b.t_peak);
    w.t_offset = inside(b.t_offset);
    if (!w.t_peak || !w.t_offset) w.t_peak = w.t_offset = std::nullopt;
    out.beats.push_back(w);
  }
  return out;
}

std::vector<double> integrated_energy(std::span<const double> lead, double fs) {
  const auto filtered = dsp::bandpass(lead, kBandLoHz, kBandHiHz, fs);
  const std::size_t n = filtered.size();
  std::vector<double> sq(n, 0.0);
  const auto at = [&](std::ptrdiff_t i) {
    return filtered[std::size_t(std::clamp<std::ptrdiff_t>(i, 0, std::ptrdiff_t(n) - 1))];
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = std::ptrdiff_t(i);
    // Five-point derivative, centred so it adds no delay.
    const double d = (2.0 * at(k + 1) + at(k + 2) - at(k - 2) - 2.0 * at(k - 1)) / 8.0;
    sq[i] = d * d;
  }
  return moving_average(sq, std::max<std::size_t>(1, samples(kIntegrationWindowS, fs)));
}

std::size_t detection_lead(const EcgRecord& record) {
  const double flat = kFlatStdMv * kFlatStdMv;
  if (variance(record.lead(kII)) > flat) return kII;
  if (variance(record.lead(kV2)) > flat) return kV2;
  std::size_t best = 0;
  double best_var = -1.0;
  for (std::size_t l = 0; l < kNumLeads; ++l) {
    const double v = variance(record.lead(l));
    if (v > best_var) best_var = v, best = l;
  }
  if (best_var <= flat) throw Error(ErrorCode::FlatSignal, "all leads are flat in " + record.id());
  return best;
}

std::vector<std::size_t> detect_r_peaks(const EcgRecord& record) {
  const double fs = record.sample_rate_hz();
  const std::size_t n = record.n_samples();
  if (n < samples(2.0, fs)) throw Error(ErrorCode::SignalTooShort, "detection needs >= 2 s");

  const std::size_t lead_index = detection_lead(record);
  const auto raw = dsp::to_double(record.lead(lead_index));
  const auto mwi = integrated_energy(raw, fs);

  const std::size_t refractory = samples(kRefractoryS, fs);
  const std::size_t twave_window = samples(0.360, fs);
  const std::size_t slope_half = samples(0.040, fs);

  std::vector<Candidate> candidates;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1]) candidates.push_back({i, mwi[i]});
  }

  const std::size_t learn = std::min(n, samples(2.0, fs));
  double spki = 0.25 * *std::max_element(mwi.begin(), mwi.begin() + std::ptrdiff_t(learn));
  double npki = 0.5 * std::accumulate(mwi.begin(), mwi.begin() + std::ptrdiff_t(learn), 0.0) / double(learn);

  const auto max_slope = [&](std::size_t centre) {
    const std::size_t lo = centre > slope_half + 2 ? centre - slope_half : 2;
    const std::size_t hi = std::min(n - 2, centre + slope_half);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s = std::max(s, std::abs(raw[i + 2] - raw[i - 2]));
    return s;
  };

  std::vector<Candidate> accepted;
  std::vector<double> recent_rr;
  const auto rr_average = [&] {
    if (recent_rr.empty()) return 0.0;
    return std::accumulate(recent_rr.begin(), recent_rr.end(), 0.0) / double(recent_rr.size());
  };
  const auto accept = [&](Candidate c) {
    if (!accepted.empty()) {
      recent_rr.push_back(double(c.index - accepted.back().index));
      if (recent_rr.size() > 8) recent_rr.erase(recent_rr.begin());
    }
    accepted.push_back(c);
  };

  const auto looks_like_t_wave = [&](const Candidate& c) {
    return !accepted.empty() && c.index - accepted.back().index < twave_window &&
           max_slope(c.index) < 0.5 * max_slope(accepted.back().index);
  };

  // Search back between the last beat and `limit` for a missed QRS.
  const auto search_back = [&](std::size_t limit, double threshold2) {
    if (accepted.empty()) return;
    const std::size_t from = accepted.back().index + refractory;
    const Candidate* best = nullptr;
    for (const auto& c : candidates) {
      if (c.index < from || c.index + refractory > limit || looks_like_t_wave(c)) continue;
      if (c.value > threshold2 && (!best || c.value > best->value)) best = &c;
    }
    if (best) {
      spki = 0.25 * best->value + 0.75 * spki;
      accept(*best);
    }
  };

  for (const auto& c : candidates) {
    const double threshold1 = npki + 0.25 * (spki - npki);
    const double rr_avg = rr_average();
    if (rr_avg > 0 && !accepted.empty() && double(c.index - accepted.back().index) > 1.66 * rr_avg) {
      search_back(c.index, 0.5 * threshold1);
    }

    if (c.value <= threshold1) {
      npki = 0.125 * c.value + 0.875 * npki;
      continue;
    }
    if (!accepted.empty() && c.index - accepted.back().index < refractory) {
      if (c.value > accepted.back().value) accepted.back() = c;
      continue;
    }
    if (looks_like_t_wave(c)) {
      npki = 0.125 * c.value + 0.875 * npki;
      continue;
    }
    spki = 0.125 * c.value + 0.875 * spki;
    accept(c);
  }
  if (rr_average() > 0 && double(n - accepted.back().index) > 1.66 * rr_average()) {
    search_back(n + refractory, 0.5 * (npki + 0.25 * (spki - npki)));
  }

  // Refine to the dominant deflection of the raw lead.
  const std::size_t refine = samples(kRefineWindowS, fs);
  const std::size_t base_half = samples(0.300, fs);
  std::vector<std::size_t> peaks;
  for (const auto& c : accepted) {
    const std::size_t lo = c.index > refine ? c.index - refine : 0;
    const std::size_t hi = std::min(n - 1, c.index + refine);
    const std::size_t blo = c.index > base_half ? c.index - base_half : 0;
    const std::size_t bhi = std::min(n, c.index + base_half);
    const double baseline = median_of(record.lead(lead_index).subspan(blo, bhi - blo));
    std::size_t best = c.index;
    double best_mag = -1.0;
    for (std::size_t i = lo; i <= hi; ++i) {
      const double mag = std::abs(raw[i] - baseline);
      if (mag > best_mag) best_mag = mag, best = i;
    }
    peaks.push_back(best);
  }
  std::sort(peaks.begin(), peaks.end());
  peaks.erase(std::unique(peaks.begin(), peaks.end()), peaks.end());

  std::vector<std::size_t> out;
  for (std::size_t p : peaks) {
    if (!out.empty() && p - out.back() < refractory) {
      if (std::abs(raw[p]) > std::abs(raw[out.back()])) out.back() = p;
      continue;
    }
    out.push_back(p);
  }
  return out;
}

// --------------------------------------------------------------- delineation

namespace {

constexpr double kQrsEnvelopeFraction = 0.02;
constexpr double kPMinAmplitudeMv = 0.05;
constexpr double kTMinAmplitudeMv = 0.03;
constexpr double kWaveEdgeFraction = 0.10;

// Multi-lead slope energy smoothed over 20 ms.
std::vector<double> slope_envelope(const EcgRecord& record) {
  const std::size_t n = record.n_samples();
  std::vector<double> e(n, 0.0);
  for (std::size_t l = 0; l < kNumLeads; ++l) {
    const auto x = record.lead(l);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = double(x[std::min(n - 1, i + 1)]) - double(x[i > 0 ? i - 1 : 0]);
      e[i] += d * d;
    }
  }
  return moving_average(e, std::max<std::size_t>(1, samples(0.020, record.sample_rate_hz())));
}

}  // namespace

Fiducials delineate(const EcgRecord& record, std::span<const std::size_t> r_peaks) {
  if (r_peaks.empty()) throw Error(ErrorCode::TooFewPeaks, "delineation needs at least one R peak");
  const double fs = record.sample_rate_hz();
  const std::size_t n = record.n_samples();
  const auto env = slope_envelope(record);
  const auto lead = record.lead(kII);

  const auto back = [&](std::size_t from, double s) {
    const std::size_t d = samples(s, fs);
    return from > d ? from - d : 0;
  };
  const auto fwd = [&](std::size_t from, double s) { return std::min(n - 1, from + samples(s, fs)); };

  Fiducials out{record.sample_rate_hz(), n, {}};
  for (std::size_t b = 0; b < r_peaks.size(); ++b) {
    const std::size_t r = r_peaks[b];
    if (r >= n) throw Error(ErrorCode::InvalidRecord, "R peak beyond record end");
    Beat beat;
    beat.r_peak = r;

    // QRS boundaries from the slope-energy envelope.
    const std::size_t on_lo = back(r, 0.080);
    const std::size_t off_hi = fwd(r, 0.120);
    const double peak = *std::max_element(env.begin() + std::ptrdiff_t(on_lo),
                                          env.begin() + std::ptrdiff_t(off_hi) + 1);
    const double level = kQrsEnvelopeFraction * peak;
    std::size_t onset = r;
    while (onset > on_lo && env[onset] >= level) --onset;
    std::size_t offset = r;
    while (offset < off_hi && env[offset] >= level) ++offset;
    beat.qrs_onset = std::min(onset, r > 0 ? r - 1 : 0);
    beat.qrs_offset = std::max(offset, std::min(n - 1, r + 1));
    if (beat.qrs_onset == beat.r_peak || beat.qrs_offset == beat.r_peak) {
      // Beat clipped by the record edge: keep R only with a one-sample QRS.
      beat.qrs_onset = r > 0 ? r - 1 : 0;
      beat.qrs_offset = std::min(n - 1, r + 1);
    }

    const std::size_t prev_offset = b > 0 ? std::min(r, r_peaks[b - 1] + samples(0.120, fs)) : 0;
    const std::size_t next_onset = b + 1 < r_peaks.size() ? back(r_peaks[b + 1], 0.080) : n - 1;
    const double baseline = median_of(lead.subspan(back(r, 0.300), fwd(r, 0.420) - back(r, 0.300) + 1));

    // P wave: interior maximum of lead II well before the QRS.
    const std::size_t p_lo = std::max(back(r, 0.300), prev_offset);
    const std::size_t p_hi = std::min(back(r, 0.100), beat.qrs_onset);
    const std::size_t edge = samples(0.008, fs);
    if (r >= samples(0.100, fs) && p_hi > p_lo + 2 * edge) {
      const auto win = lead.subspan(p_lo, p_hi - p_lo + 1);
      const double p_base = median_of(win);
      const auto it = std::max_element(win.begin(), win.end());
      const std::size_t pk = p_lo + std::size_t(it - win.begin());
      const double amp = double(*it) - p_base;
      if (amp >= kPMinAmplitudeMv && pk > p_lo + edge && pk + edge < p_hi) {
        std::size_t on = pk;
        const std::size_t on_limit = std::max(back(r, 0.400), prev_offset);
        while (on > on_limit && double(lead[on]) - p_base > kWaveEdgeFraction * amp) --on;
        if (on < pk && on > on_limit) {
          beat.p_onset = on;
          beat.p_peak = pk;
        }
      }
    }

    // T wave: largest excursion after the QRS, offset where it decays to 10%.
    const std::size_t t_lo = std::max(fwd(r, 0.120), beat.qrs_offset + 1);
    const std::size_t t_hi = std::min(fwd(r, 0.420), next_onset);
    if (t_hi > t_lo + 2) {
      std::size_t pk = t_lo;
      double amp = 0.0;
      for (std::size_t i = t_lo; i <= t_hi; ++i) {
        const double a = std::abs(double(lead[i]) - baseline);
        if (a > amp) amp = a, pk = i;
      }
      if (amp >= kTMinAmplitudeMv && pk > t_lo && pk < t_hi) {
        std::size_t off = pk;
        while (off < t_hi && std::abs(double(lead[off]) - baseline) > kWaveEdgeFraction * amp) ++off;
        if (off > pk) {
          beat.t_peak = pk;
          beat.t_offset = off;
        }
      }
    }
    out.beats.push_back(beat);
  }
  return out;
}

std::vector<double> rr_intervals(std::span<const std::size_t> r_peaks, double fs) {
  if (r_peaks.size() < 2) throw Error(ErrorCode::TooFewPeaks, "need at least two R peaks");
  std::vector<double> out;
  out.reserve(r_peaks.size() - 1);
  for (std::size_t i = 1; i < r_peaks.size(); ++i) {
    out.push_back(1000.0 * (double(r_peaks[i]) - double(r_peaks[i - 1])) / fs);
  }
  return out;
}

std::vector<std::size_t> irregular_beats(const Fiducials& fid) {
  const auto& beats = fid.beats;
  const double fs = fid.sample_rate_hz;
  std::vector<std::size_t> out;
  if (beats.empty()) return out;

  std::vector<double> rr;
  for (std::size_t b = 1; b < beats.size(); ++b) rr.push_back(double(beats[b].r_peak - beats[b - 1].r_peak));
  double median_rr = 0.0;
  if (!rr.empty()) {
    std::vector<double> sorted = rr;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    median_rr = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  }

  for (std::size_t b = 0; b < beats.size(); ++b) {
    const bool premature = b > 0 && rr[b - 1] < kPrematureRatio * median_rr;
    const double width_ms = 1000.0 * double(beats[b].qrs_offset - beats[b].qrs_onset) / fs;
    const bool wide = width_ms > kWideQrsMs;
    const bool lost_p = b > 0 && b + 1 < beats.size() && !beats[b].has_p() &&
                        beats[b - 1].has_p() && beats[b + 1].has_p();
    if (premature || wide || lost_p) out.push_back(b);
  }
  return out;
}

MarkedRegions merge_intervals(MarkedRegions intervals) {
  std::sort(intervals.begin(), intervals.end());
  MarkedRegions out;
  for (const auto& iv : intervals) {
    if (iv.first >= iv.second) continue;
    if (!out.empty() && iv.first <= out.back().second) {
      out.back().second = std::max(out.back().second, iv.second);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

MarkedRegions mark_irregular(const EcgRecord& record, const Fiducials& fid) {
  const double fs = fid.sample_rate_hz;
  const std::size_t n = record.n_samples();
  const std::size_t pad = samples(kRegionPadS, fs);
  MarkedRegions regions;
  for (std::size_t b : irregular_beats(fid)) {
    const auto& beat = fid.beats[b];
    const std::size_t start = beat.qrs_onset > pad ? beat.qrs_onset - pad : 0;
    const std::size_t last = beat.t_offset.value_or(beat.qrs_offset);
    regions.emplace_back(start, std::min(n, last + pad + 1));
  }
  return merge_intervals(std::move(regions));
}

bool regions_valid(const MarkedRegions& regions, std::size_t n) {
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].first >= regions[i].second || regions[i].second > n) return false;
    if (i > 0 && regions[i].first <= regions[i - 1].second) return false;
  }
  return true;
}

}  // namespace ecgdx::qrs
