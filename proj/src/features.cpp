#include "ecgdx/features.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ecgdx::features {

namespace {

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments moments(const std::vector<double>& v) {
  if (v.empty()) return {};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / double(v.size()))};
}

}  // namespace

FeatureVector extract_features(const EcgRecord& record, const qrs::Fiducials& fid) {
  FeatureVector f{};
  const double ms_per_sample = 1000.0 / record.sample_rate_hz();
  const auto& beats = fid.beats;

  if (beats.size() >= 2) {
    std::vector<double> qrs, pr, rr;
    std::size_t no_p = 0;
    for (std::size_t b = 0; b < beats.size(); ++b) {
      qrs.push_back(double(beats[b].qrs_offset - beats[b].qrs_onset) * ms_per_sample);
      if (beats[b].p_onset) {
        pr.push_back(double(beats[b].qrs_onset - *beats[b].p_onset) * ms_per_sample);
      } else {
        ++no_p;
      }
      if (b > 0) rr.push_back(double(beats[b].r_peak - beats[b - 1].r_peak) * ms_per_sample);
    }
    const auto q = moments(qrs), p = moments(pr), r = moments(rr);
    f[0] = q.mean;
    f[1] = q.std;
    f[2] = p.mean;
    f[3] = p.std;
    f[4] = r.mean;
    f[5] = r.std;
    if (rr.size() >= 2) {
      double ss = 0.0;
      for (std::size_t i = 1; i < rr.size(); ++i) ss += (rr[i] - rr[i - 1]) * (rr[i] - rr[i - 1]);
      f[6] = std::sqrt(ss / double(rr.size() - 1));
    }
    f[7] = double(no_p) / double(beats.size());
  }

  for (std::size_t l = 0; l < kNumLeads; ++l) {
    const auto x = record.lead(l);
    const std::vector<double> v(x.begin(), x.end());
    f[8 + l] = moments(v).std;
  }
  return f;
}

FeatureMask missing_features(const qrs::Fiducials& fid) {
  FeatureMask m{};
  const auto& beats = fid.beats;
  if (beats.size() < 2) {
    for (std::size_t j = 0; j < 8; ++j) m[j] = true;
    return m;
  }
  const bool any_p = std::any_of(beats.begin(), beats.end(), [](const qrs::Beat& b) { return b.has_p(); });
  m[2] = m[3] = !any_p;
  m[6] = beats.size() < 3;
  return m;
}

Standardizer Standardizer::fit(std::span<const FeatureVector> rows, std::span<const FeatureMask> missing) {
  if (!missing.empty() && missing.size() != rows.size()) {
    throw Error(ErrorCode::ShapeMismatch, "feature mask count differs from row count");
  }
  Standardizer s;
  s.std.fill(1.0);
  if (rows.empty()) return s;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    std::vector<double> col;
    col.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (missing.empty() || !missing[i][j]) col.push_back(rows[i][j]);
    }
    const auto m = moments(col);
    s.mean[j] = m.mean;
    s.std[j] = m.std > 1e-12 ? m.std : 1.0;
  }
  return s;
}

FeatureVector Standardizer::apply(const FeatureVector& x, const FeatureMask& missing) const {
  FeatureVector out{};
  for (std::size_t j = 0; j < kNumFeatures; ++j) out[j] = missing[j] ? 0.0 : (x[j] - mean[j]) / std[j];
  return out;
}

}  // namespace ecgdx::features
