#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "ecgdx/core.hpp"

namespace ecgdx::synth {

struct NoiseSpec {
  double white_sigma_mv = 0.0;
  double baseline_amp_mv = 0.0;
  double baseline_freq_hz = 0.3;
  double powerline_amp_mv = 0.0;
  double powerline_freq_hz = 50.0;
};

/// Parameters of one synthetic record.
///
/// Abnormalities are indexed like `LabelVector` minus Normal, i.e.
/// `abnormal[kAF - 1]`. `intensity` scales the morphological injectors
/// (0 = absent, 1 = nominal); `ectopic_beats` sets the number of PVC/PAC
/// events when those toggles are on.
struct SynthSpec {
  int sample_rate_hz = 500;
  double duration_s = 10.0;
  double heart_rate_bpm = 60.0;
  std::array<bool, kNumLabels - 1> abnormal{};
  double intensity = 1.0;
  int ectopic_beats = 1;
  double pr_ms = 160.0;
  double qrs_ms = 90.0;
  double amplitude_scale = 1.0;
  /// Frontal-plane QRS axis in degrees (60 = normal).
  double qrs_axis_deg = 60.0;
  /// Beat-to-beat RR jitter, as a fraction of the nominal RR, for sinus rhythm.
  double rr_jitter = 0.0;
  NoiseSpec noise;
  std::uint64_t seed = 0;

  SynthSpec& with(Label label, bool on = true) {
    abnormal[label - 1] = on;
    return *this;
  }
};

struct BeatTruth {
  enum class Kind { Sinus, PVC, PAC };
  Kind kind = Kind::Sinus;
  double r_time_s = 0.0;
  bool has_p = true;
  double p_onset_s = 0.0;
  double qrs_onset_s = 0.0;
  double qrs_offset_s = 0.0;
  double t_offset_s = 0.0;
};

struct GroundTruth {
  std::vector<double> beat_times_s;
  std::vector<BeatTruth> beats;
  /// Ectopic regions [start, end) in samples.
  std::vector<std::pair<std::size_t, std::size_t>> regions;
  double pr_ms = 0.0;
  double qrs_ms = 0.0;
};

struct SynthOutput {
  EcgRecord record;
  LabelVector labels;
  GroundTruth truth;
};

/// Frontal/horizontal dipole projection used for all leads: row i maps a
/// cardiac dipole (x, y, z) onto lead i.
const std::array<std::array<double, 3>, kNumLeads>& lead_projection();

/// Throws InvalidSpec when duration * fs is outside [4500, 30000] or a
/// parameter is out of range.
SynthOutput generate(const SynthSpec& spec, const std::string& id = "synth");

/// How many records to draw for each label combination.
using ClassMix = std::vector<std::pair<LabelVector, std::size_t>>;

/// Parses `normal=50,pvc=50` (label names are case-insensitive; `af+pvc=5`
/// requests a combined label).
ClassMix parse_mix(std::string_view text);

struct DatasetOptions {
  double min_duration_s = 10.0;
  double max_duration_s = 20.0;
  double min_hr_bpm = 55.0;
  double max_hr_bpm = 90.0;
  NoiseSpec noise{0.02, 0.1, 0.3, 0.0, 50.0};
  int min_ectopic = 1;
  int max_ectopic = 2;
  std::string id_prefix = "rec";
};

struct SynthDataset {
  Dataset dataset;
  std::map<std::string, GroundTruth> truth;
};

/// Stratified dataset: per-record parameters (heart rate, duration, axis,
/// amplitude, noise phase) are drawn from a generator seeded with `seed`.
SynthDataset generate_dataset(const ClassMix& mix, std::uint64_t seed,
                              const DatasetOptions& options = {}, Split split = Split::Train);

/// Writes `<id>.ecg`, `labels.csv` and `<id>.truth.json` into `dir`.
void write_dataset(const SynthDataset& data, const std::filesystem::path& dir);

std::string truth_to_json(const GroundTruth& truth);

}  // namespace ecgdx::synth
