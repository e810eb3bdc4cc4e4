#include "ecgdx/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "json.hpp"

namespace ecgdx::synth {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 frontal(double deg, double z) {
  const double r = deg * std::numbers::pi / 180.0;
  return {std::cos(r), std::sin(r), z};
}

Vec3 scaled(Vec3 v, double s) { return {v[0] * s, v[1] * s, v[2] * s}; }

// One Gaussian deflection projected through a dipole direction.
struct Wave {
  double centre_s;
  double sigma_s;
  Vec3 dipole;  // amplitude included
};

// A Gaussian falls to 10% of its peak at 2.146 sigma.
constexpr double kTenPercentWidth = 2.146;

struct BeatPlan {
  BeatTruth::Kind kind;
  double r_time_s;
  double rr_before_s;
};

}  // namespace

const std::array<std::array<double, 3>, kNumLeads>& lead_projection() {
  static const std::array<std::array<double, 3>, kNumLeads> table = [] {
    std::array<std::array<double, 3>, kNumLeads> t{};
    // Hexaxial frontal leads (y points inferiorly).
    const double frontal_deg[6] = {0.0, 60.0, 120.0, -150.0, -30.0, 90.0};
    for (int i = 0; i < 6; ++i) {
      const double r = frontal_deg[i] * std::numbers::pi / 180.0;
      t[std::size_t(i)] = {std::cos(r), std::sin(r), 0.0};
    }
    // Precordial leads in the horizontal plane (z points anteriorly).
    const double horizontal_deg[6] = {120.0, 95.0, 75.0, 55.0, 30.0, 0.0};
    for (int i = 0; i < 6; ++i) {
      const double r = horizontal_deg[i] * std::numbers::pi / 180.0;
      t[std::size_t(6 + i)] = {std::cos(r), 0.0, std::sin(r)};
    }
    return t;
  }();
  return table;
}

SynthOutput generate(const SynthSpec& spec, const std::string& id) {
  const double fs = spec.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * fs));
  if (spec.sample_rate_hz <= 0 || n < 4500 || n > 30000) {
    throw Error(ErrorCode::InvalidSpec, "duration * fs must lie in [4500, 30000]");
  }
  if (!(spec.heart_rate_bpm >= 30.0 && spec.heart_rate_bpm <= 150.0)) {
    throw Error(ErrorCode::InvalidSpec, "heart rate outside [30, 150] bpm");
  }
  if (spec.pr_ms <= 0 || spec.qrs_ms <= 0 || spec.amplitude_scale <= 0 || spec.intensity < 0 ||
      spec.ectopic_beats < 0 || spec.rr_jitter < 0 || spec.rr_jitter > 0.3) {
    throw Error(ErrorCode::InvalidSpec, "non-positive timing or amplitude parameter");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto has = [&](Label l) { return spec.abnormal[l - 1]; };
  const double k = spec.intensity;
  const double amp = spec.amplitude_scale;
  const double rr = 60.0 / spec.heart_rate_bpm;
  const double duration = double(n) / fs;

  double pr_s = spec.pr_ms / 1000.0;
  if (has(kFDAVB)) pr_s = std::max(pr_s, 0.240);
  double qrs_s = spec.qrs_ms / 1000.0;
  if (has(kCRBBB)) qrs_s = std::max(qrs_s, 0.140);
  const double axis = has(kLAFB) ? -60.0 : spec.qrs_axis_deg;

  // ---- rhythm: sinus RR series, then ectopic substitutions.
  std::vector<double> sinus_rr;
  {
    double t = rr / 2.0;
    while (t + 0.45 < duration) {
      double r = rr;
      if (has(kAF)) {
        r = rr * (0.55 + 0.9 * unit(rng));
      } else if (spec.rr_jitter > 0) {
        r = rr * (1.0 + spec.rr_jitter * std::clamp(gauss(rng), -2.5, 2.5));
      }
      sinus_rr.push_back(r);
      t += r;
    }
  }
  if (has(kAF) && sinus_rr.size() > 2) {
    // Stretch deviations until the RR coefficient of variation is >= 0.22.
    double mean = 0, var = 0;
    for (double r : sinus_rr) mean += r;
    mean /= double(sinus_rr.size());
    for (double r : sinus_rr) var += (r - mean) * (r - mean);
    const double cv = std::sqrt(var / double(sinus_rr.size())) / mean;
    if (cv < 0.22) {
      const double s = 0.22 / std::max(cv, 1e-6);
      for (double& r : sinus_rr) r = std::max(0.3 * rr, mean + (r - mean) * s);
    }
  }

  std::vector<BeatTruth::Kind> events;
  for (int e = 0; e < (has(kPVC) ? spec.ectopic_beats : 0); ++e) events.push_back(BeatTruth::Kind::PVC);
  for (int e = 0; e < (has(kPAC) ? spec.ectopic_beats : 0); ++e) events.push_back(BeatTruth::Kind::PAC);
  std::shuffle(events.begin(), events.end(), rng);

  // Candidate positions keep two sinus beats before, one after, and one gap between events.
  std::vector<BeatPlan> beats;
  {
    const std::size_t nominal = sinus_rr.size();
    std::vector<std::size_t> slots;
    for (std::size_t i = 2; i + 2 < nominal; ++i) slots.push_back(i);
    std::shuffle(slots.begin(), slots.end(), rng);
    std::set<std::size_t> chosen;
    std::map<std::size_t, BeatTruth::Kind> at;
    for (auto kind : events) {
      for (std::size_t s : slots) {
        if (chosen.count(s) || chosen.count(s - 1) || chosen.count(s + 1)) continue;
        chosen.insert(s);
        at[s] = kind;
        break;
      }
    }
    if (at.size() != events.size()) {
      throw Error(ErrorCode::InvalidSpec, "record too short for the requested ectopic beats");
    }

    double t = rr / 2.0;
    double prev_rr = rr;
    beats.push_back({BeatTruth::Kind::Sinus, t, rr});
    for (std::size_t i = 1; i < nominal && t + 0.45 < duration; ++i) {
      const double step = sinus_rr[i - 1];
      auto it = at.find(i);
      if (it == at.end()) {
        t += step;
        beats.push_back({BeatTruth::Kind::Sinus, t, step});
        prev_rr = step;
        continue;
      }
      if (it->second == BeatTruth::Kind::PVC) {
        const double coupling = 0.6 * prev_rr;
        beats.push_back({BeatTruth::Kind::PVC, t + coupling, coupling});
        // Full compensatory pause.
        const double next = t + 2.0 * step;
        beats.push_back({BeatTruth::Kind::Sinus, next, next - (t + coupling)});
        t = next;
      } else {
        const double coupling = 0.65 * prev_rr;
        beats.push_back({BeatTruth::Kind::PAC, t + coupling, coupling});
        const double next = t + coupling + step;
        beats.push_back({BeatTruth::Kind::Sinus, next, step});
        t = next;
      }
      ++i;  // the replaced beat and its successor are already placed
      prev_rr = step;
    }
    while (!beats.empty() && beats.back().r_time_s + 0.45 >= duration) beats.pop_back();
  }

  // ---- morphology.
  const Vec3 r_dir = frontal(axis, -0.3);
  const Vec3 q_dir = {-0.35, 0.15, 0.8};
  const Vec3 s_dir = {-0.3, -0.5, -0.6};
  const Vec3 p_dir = frontal(50.0, 0.2);
  const Vec3 t_dir = frontal(has(kLAFB) ? 10.0 : 45.0, -0.1);
  const Vec3 er_dir = frontal(30.0, 0.3);

  std::vector<Wave> waves;
  GroundTruth truth;
  truth.pr_ms = pr_s * 1000.0;
  truth.qrs_ms = qrs_s * 1000.0;

  for (const auto& plan : beats) {
    BeatTruth bt;
    bt.kind = plan.kind;
    bt.r_time_s = plan.r_time_s;
    const double tr = plan.r_time_s;
    const double rr_here = std::min(std::max(plan.rr_before_s, 0.4), 1.5);

    if (plan.kind == BeatTruth::Kind::PVC) {
      const double d = 0.150;
      bt.has_p = false;
      bt.qrs_onset_s = tr - d / 2;
      bt.qrs_offset_s = tr + d / 2;
      const Vec3 dir = {0.3, 0.8, 0.6};
      waves.push_back({tr, d / 7.0, scaled(dir, 1.6 * amp)});
      waves.push_back({tr + 0.3 * d, d / 8.0, scaled(dir, -0.5 * amp)});
      const double tc = tr + d / 2 + 0.16;
      waves.push_back({tc, 0.045, scaled(dir, -0.45 * amp)});
      bt.t_offset_s = tc + kTenPercentWidth * 0.045;
    } else {
      const double d = qrs_s;
      bt.qrs_onset_s = tr - d / 2;
      bt.qrs_offset_s = tr + d / 2;
      waves.push_back({tr - 0.3 * d, d / 14.0, scaled(q_dir, 0.15 * amp)});
      waves.push_back({tr, d / 9.0, scaled(r_dir, 1.2 * amp)});
      waves.push_back({tr + 0.3 * d, d / 12.0, scaled(s_dir, 0.3 * amp)});
      if (has(kCRBBB)) {
        // Terminal rightward-anterior forces: late R' in V1, slurred S in I/V6.
        waves.push_back({tr + 0.33 * d, d / 10.0, scaled(Vec3{-0.55, 0.0, 0.85}, 0.8 * k * amp)});
      }
      if (has(kER)) {
        waves.push_back({tr + d / 2 + 0.015, 0.020, scaled(er_dir, 0.25 * k * amp)});
      }

      const bool p_wave = !has(kAF);
      bt.has_p = p_wave;
      if (p_wave) {
        const double sigma_p = 0.018;
        const double onset = bt.qrs_onset_s - pr_s;
        bt.p_onset_s = onset;
        const Vec3 dir = plan.kind == BeatTruth::Kind::PAC ? frontal(20.0, 0.3) : p_dir;
        const double pamp = plan.kind == BeatTruth::Kind::PAC ? 0.13 : 0.15;
        waves.push_back({onset + kTenPercentWidth * sigma_p, sigma_p, scaled(dir, pamp * amp)});
      }

      const double sigma_t = 0.040;
      const double tc = tr + d / 2 + 0.105 + 0.1 * rr_here;
      double t_amp = 0.3 * amp;
      if (has(kTWC)) t_amp *= (1.0 - 1.7 * std::min(k, 1.0));
      waves.push_back({tc, sigma_t, scaled(t_dir, t_amp)});
      bt.t_offset_s = tc + kTenPercentWidth * sigma_t;
    }
    truth.beat_times_s.push_back(tr);
    truth.beats.push_back(bt);
  }

  // ---- render.
  const auto& proj = lead_projection();
  std::vector<double> dipole_signal(3 * n, 0.0);
  for (const auto& w : waves) {
    const auto lo = std::size_t(std::max(0.0, std::floor((w.centre_s - 5 * w.sigma_s) * fs)));
    const auto hi = std::min(n, std::size_t(std::max(0.0, std::ceil((w.centre_s + 5 * w.sigma_s) * fs))));
    for (std::size_t i = lo; i < hi; ++i) {
      const double z = (double(i) / fs - w.centre_s) / w.sigma_s;
      const double g = std::exp(-0.5 * z * z);
      for (int a = 0; a < 3; ++a) dipole_signal[std::size_t(a) * n + i] += g * w.dipole[std::size_t(a)];
    }
  }
  if (has(kAF)) {
    // Fibrillatory baseline along the atrial axis.
    const double f1 = 4.0 + 3.0 * unit(rng), f2 = 4.0 + 3.0 * unit(rng);
    const double ph1 = 2 * std::numbers::pi * unit(rng), ph2 = 2 * std::numbers::pi * unit(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = double(i) / fs;
      const double f = 0.015 * amp * (std::sin(2 * std::numbers::pi * f1 * t + ph1) +
                                     std::sin(2 * std::numbers::pi * f2 * t + ph2));
      for (int a = 0; a < 3; ++a) dipole_signal[std::size_t(a) * n + i] += f * p_dir[std::size_t(a)];
    }
  }

  std::vector<float> signal(kNumLeads * n);
  const auto& nz = spec.noise;
  const double base_phase = 2 * std::numbers::pi * unit(rng);
  const double line_phase = 2 * std::numbers::pi * unit(rng);
  for (std::size_t l = 0; l < kNumLeads; ++l) {
    const double lead_gain = 0.8 + 0.4 * unit(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = double(i) / fs;
      double v = proj[l][0] * dipole_signal[i] + proj[l][1] * dipole_signal[n + i] +
                 proj[l][2] * dipole_signal[2 * n + i];
      if (nz.white_sigma_mv > 0) v += nz.white_sigma_mv * gauss(rng);
      if (nz.baseline_amp_mv > 0) {
        v += nz.baseline_amp_mv * lead_gain *
             std::sin(2 * std::numbers::pi * nz.baseline_freq_hz * t + base_phase);
      }
      if (nz.powerline_amp_mv > 0) {
        v += nz.powerline_amp_mv * std::sin(2 * std::numbers::pi * nz.powerline_freq_hz * t + line_phase);
      }
      signal[l * n + i] = float(v);
    }
  }

  // ---- ectopic regions, padded by 250 ms and merged.
  const double pad = 0.250;
  for (const auto& b : truth.beats) {
    if (b.kind == BeatTruth::Kind::Sinus) continue;
    const auto s = std::size_t(std::max(0.0, std::floor((b.qrs_onset_s - pad) * fs)));
    const auto e = std::min(n, std::size_t(std::ceil((b.t_offset_s + pad) * fs)));
    if (!truth.regions.empty() && s <= truth.regions.back().second) {
      truth.regions.back().second = std::max(truth.regions.back().second, e);
    } else {
      truth.regions.emplace_back(s, e);
    }
  }

  std::array<bool, kNumLabels - 1> abnormal = spec.abnormal;
  return {EcgRecord(id, spec.sample_rate_hz, n, std::move(signal)),
          LabelVector::from_abnormalities(abnormal), std::move(truth)};
}

// ------------------------------------------------------------------ datasets

ClassMix parse_mix(std::string_view text) {
  ClassMix mix;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::InvalidSpec, "mix item needs '='");
    const std::string count_text(item.substr(eq + 1));
    std::size_t count = 0;
    try {
      std::size_t used = 0;
      count = std::stoul(count_text, &used);
      if (used != count_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidSpec, "bad count '" + count_text + "'");
    }

    std::array<bool, kNumLabels - 1> abnormal{};
    bool normal = false;
    std::string_view names = item.substr(0, eq);
    std::size_t p = 0;
    while (p <= names.size()) {
      auto plus = names.find('+', p);
      if (plus == std::string_view::npos) plus = names.size();
      std::string name(names.substr(p, plus - p));
      p = plus + 1;
      std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
      bool found = false;
      for (std::size_t i = 0; i < kNumLabels; ++i) {
        std::string label(kLabelNames[i]);
        std::transform(label.begin(), label.end(), label.begin(), [](unsigned char c) { return std::tolower(c); });
        if (label == name) {
          found = true;
          if (i == kNormal) normal = true;
          else abnormal[i - 1] = true;
        }
      }
      if (!found) throw Error(ErrorCode::InvalidSpec, "unknown label '" + name + "'");
    }
    const auto lv = LabelVector::from_abnormalities(abnormal);
    if (normal && !lv.normal()) throw Error(ErrorCode::InvalidSpec, "normal cannot be combined");
    mix.emplace_back(lv, count);
  }
  if (mix.empty()) throw Error(ErrorCode::InvalidSpec, "empty mix");
  return mix;
}

SynthDataset generate_dataset(const ClassMix& mix, std::uint64_t seed,
                              const DatasetOptions& options, Split split) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthDataset out{Dataset(split), {}};
  std::size_t index = 0;
  for (const auto& [lv, count] : mix) {
    for (std::size_t j = 0; j < count; ++j, ++index) {
      SynthSpec spec;
      for (std::size_t i = 1; i < kNumLabels; ++i) spec.abnormal[i - 1] = lv[i];
      spec.duration_s = options.min_duration_s + (options.max_duration_s - options.min_duration_s) * unit(rng);
      spec.heart_rate_bpm = options.min_hr_bpm + (options.max_hr_bpm - options.min_hr_bpm) * unit(rng);
      spec.amplitude_scale = 0.8 + 0.4 * unit(rng);
      spec.qrs_axis_deg = 30.0 + 50.0 * unit(rng);
      spec.pr_ms = 140.0 + 40.0 * unit(rng);
      spec.qrs_ms = 80.0 + 20.0 * unit(rng);
      spec.rr_jitter = 0.02;
      spec.ectopic_beats = options.min_ectopic +
                           int(unit(rng) * double(options.max_ectopic - options.min_ectopic + 1));
      spec.ectopic_beats = std::min(spec.ectopic_beats, options.max_ectopic);
      spec.noise = options.noise;
      spec.seed = rng();

      char id[64];
      std::snprintf(id, sizeof id, "%s%05zu", options.id_prefix.c_str(), index);
      auto generated = generate(spec, id);
      out.truth.emplace(id, std::move(generated.truth));
      out.dataset.add(std::move(generated.record), generated.labels);
    }
  }
  return out;
}

std::string truth_to_json(const GroundTruth& truth) {
  nlohmann::ordered_json j;
  j["beat_times_s"] = truth.beat_times_s;
  auto regions = nlohmann::ordered_json::array();
  for (const auto& [s, e] : truth.regions) regions.push_back({s, e});
  j["regions"] = regions;
  j["pr_ms"] = truth.pr_ms;
  j["qrs_ms"] = truth.qrs_ms;
  return j.dump();
}

void write_dataset(const SynthDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, LabelVector> labels;
  for (const auto& item : data.dataset) {
    save_record(item.record, dir / (item.record.id() + ".ecg"));
    labels.emplace(item.record.id(), item.labels);
    const auto it = data.truth.find(item.record.id());
    if (it != data.truth.end()) {
      std::ofstream out(dir / (item.record.id() + ".truth.json"), std::ios::trunc);
      if (!out) throw Error(ErrorCode::Io, "cannot write truth for " + item.record.id());
      out << truth_to_json(it->second) << '\n';
    }
  }
  save_labels(labels, dir / "labels.csv");
}

}  // namespace ecgdx::synth
