#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ecgdx {

enum class ErrorCode {
  InvalidRecord,
  InvalidLabel,
  Io,
  BadMagic,
  HeaderMismatch,
  NonFinite,
  UnknownColumn,
  NonBinaryCell,
  DuplicateId,
  SignalTooShort,
  CorruptedCoeffs,
  InvalidBand,
  FlatSignal,
  TooFewPeaks,
  ZeroCount,
  RecordTooShort,
  ShapeMismatch,
  UninitializedStats,
  NonFiniteLoss,
  UnsupportedVersion,
  InvalidConfig,
  InvalidSpec,
  EmptyDataset,
  LengthMismatch,
};

std::string_view to_string(ErrorCode code);

/// Exception type thrown by every module; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline constexpr std::size_t kNumLeads = 12;
inline constexpr std::array<std::string_view, kNumLeads> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

enum Lead : std::size_t { kI, kII, kIII, kAVR, kAVL, kAVF, kV1, kV2, kV3, kV4, kV5, kV6 };

/// Twelve equal-length leads sampled at a fixed rate, in millivolts.
///
/// Samples are stored lead-major: `lead(i)[n]` is sample n of lead i.
class EcgRecord {
 public:
  EcgRecord() = default;
  /// Throws InvalidRecord unless `signal.size() == 12 * n_samples`, n ≥ 1, and
  /// every sample is finite.
  EcgRecord(std::string id, int sample_rate_hz, std::size_t n_samples, std::vector<float> signal);

  static EcgRecord zeros(std::string id, int sample_rate_hz, std::size_t n_samples);

  const std::string& id() const noexcept { return id_; }
  int sample_rate_hz() const noexcept { return sample_rate_hz_; }
  std::size_t n_samples() const noexcept { return n_samples_; }
  double duration_s() const noexcept { return double(n_samples_) / sample_rate_hz_; }

  std::span<const float> lead(std::size_t i) const {
    return {signal_.data() + i * n_samples_, n_samples_};
  }
  std::span<float> lead(std::size_t i) { return {signal_.data() + i * n_samples_, n_samples_}; }
  const std::vector<float>& data() const noexcept { return signal_; }

  /// Samples [start, start + length) of every lead; throws if out of range.
  EcgRecord slice(std::size_t start, std::size_t length) const;

  bool operator==(const EcgRecord&) const = default;

 private:
  std::string id_;
  int sample_rate_hz_ = 500;
  std::size_t n_samples_ = 0;
  std::vector<float> signal_;
};

inline constexpr std::size_t kNumLabels = 9;
inline constexpr std::array<std::string_view, kNumLabels> kLabelNames = {
    "Normal", "AF", "FDAVB", "CRBBB", "LAFB", "PVC", "PAC", "ER", "TWC"};

enum Label : std::size_t { kNormal, kAF, kFDAVB, kCRBBB, kLAFB, kPVC, kPAC, kER, kTWC };

/// Nine diagnostic flags. Normal is exclusive with every abnormality and at
/// least one flag is always set.
class LabelVector {
 public:
  /// Normal-only vector.
  LabelVector();
  /// Throws InvalidLabel when the flags violate the invariants.
  explicit LabelVector(const std::array<bool, kNumLabels>& flags);
  /// Builds from the 8 abnormality flags (AF..TWC); Normal is set iff all are false.
  static LabelVector from_abnormalities(const std::array<bool, kNumLabels - 1>& abnormal);

  bool operator[](std::size_t i) const { return flags_[i]; }
  bool normal() const { return flags_[kNormal]; }
  const std::array<bool, kNumLabels>& flags() const noexcept { return flags_; }
  std::string to_string() const;

  bool operator==(const LabelVector&) const = default;

 private:
  std::array<bool, kNumLabels> flags_{};
};

enum class Split { Train, Validation, Test };

struct LabeledRecord {
  EcgRecord record;
  LabelVector labels;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Split split) : split_(split) {}

  /// Throws DuplicateId if a record with the same id is already present.
  void add(EcgRecord record, LabelVector labels);

  Split split() const noexcept { return split_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const LabeledRecord& operator[](std::size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  /// Positive count per label.
  std::array<std::size_t, kNumLabels> label_counts() const;

 private:
  Split split_ = Split::Train;
  std::vector<LabeledRecord> items_;
};

void save_record(const EcgRecord& record, const std::filesystem::path& path);
EcgRecord load_record(const std::filesystem::path& path);

/// ECG1 byte image of a record; `save_record` writes exactly these bytes.
std::vector<unsigned char> encode_record(const EcgRecord& record);
EcgRecord decode_record(std::span<const unsigned char> bytes);

std::map<std::string, LabelVector> load_labels(const std::filesystem::path& path);
std::map<std::string, LabelVector> parse_labels(std::string_view csv);
void save_labels(const std::map<std::string, LabelVector>& labels, const std::filesystem::path& path);

/// Loads every `*.ecg` file in `dir` together with `dir/labels.csv`.
/// Records are ordered by id.
Dataset load_dataset(const std::filesystem::path& dir, Split split = Split::Train);

}  // namespace ecgdx
