#include "ecgdx/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ecgdx {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::NonBinaryCell: return "NonBinaryCell";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::CorruptedCoeffs: return "CorruptedCoeffs";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::FlatSignal: return "FlatSignal";
    case ErrorCode::TooFewPeaks: return "TooFewPeaks";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::RecordTooShort: return "RecordTooShort";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UninitializedStats: return "UninitializedStats";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
  }
  return "Unknown";
}

// ---------------------------------------------------------------- EcgRecord

EcgRecord::EcgRecord(std::string id, int sample_rate_hz, std::size_t n_samples,
                     std::vector<float> signal)
    : id_(std::move(id)), sample_rate_hz_(sample_rate_hz), n_samples_(n_samples),
      signal_(std::move(signal)) {
  if (sample_rate_hz_ <= 0) throw Error(ErrorCode::InvalidRecord, "sample rate must be positive");
  if (n_samples_ == 0) throw Error(ErrorCode::InvalidRecord, "record has no samples");
  if (signal_.size() % n_samples_ != 0 || signal_.size() / n_samples_ != kNumLeads) {
    throw Error(ErrorCode::InvalidRecord,
                "expected 12 leads of " + std::to_string(n_samples_) + " samples, got " +
                    std::to_string(signal_.size()) + " values");
  }
  for (float v : signal_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidRecord, "non-finite sample in " + id_);
  }
}

EcgRecord EcgRecord::zeros(std::string id, int sample_rate_hz, std::size_t n_samples) {
  return EcgRecord(std::move(id), sample_rate_hz, n_samples,
                   std::vector<float>(kNumLeads * n_samples, 0.0f));
}

EcgRecord EcgRecord::slice(std::size_t start, std::size_t length) const {
  if (length == 0 || start + length > n_samples_) {
    throw Error(ErrorCode::InvalidRecord, "slice out of range");
  }
  std::vector<float> out(kNumLeads * length);
  for (std::size_t l = 0; l < kNumLeads; ++l) {
    auto src = lead(l).subspan(start, length);
    std::copy(src.begin(), src.end(), out.begin() + l * length);
  }
  return EcgRecord(id_, sample_rate_hz_, length, std::move(out));
}

// -------------------------------------------------------------- LabelVector

LabelVector::LabelVector() { flags_[kNormal] = true; }

LabelVector::LabelVector(const std::array<bool, kNumLabels>& flags) : flags_(flags) {
  bool any_abnormal = std::any_of(flags_.begin() + 1, flags_.end(), [](bool b) { return b; });
  if (flags_[kNormal] && any_abnormal) {
    throw Error(ErrorCode::InvalidLabel, "Normal cannot coexist with an abnormality");
  }
  if (!flags_[kNormal] && !any_abnormal) {
    throw Error(ErrorCode::InvalidLabel, "at least one label must be set");
  }
}

LabelVector LabelVector::from_abnormalities(const std::array<bool, kNumLabels - 1>& abnormal) {
  std::array<bool, kNumLabels> flags{};
  bool any = false;
  for (std::size_t i = 0; i < abnormal.size(); ++i) {
    flags[i + 1] = abnormal[i];
    any = any || abnormal[i];
  }
  flags[kNormal] = !any;
  return LabelVector(flags);
}

std::string LabelVector::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (!flags_[i]) continue;
    if (!out.empty()) out += '+';
    out += kLabelNames[i];
  }
  return out;
}

// ------------------------------------------------------------------ Dataset

void Dataset::add(EcgRecord record, LabelVector labels) {
  for (const auto& item : items_) {
    if (item.record.id() == record.id()) {
      throw Error(ErrorCode::DuplicateId, "record id '" + record.id() + "' already in dataset");
    }
  }
  items_.push_back({std::move(record), labels});
}

std::array<std::size_t, kNumLabels> Dataset::label_counts() const {
  std::array<std::size_t, kNumLabels> counts{};
  for (const auto& item : items_) {
    for (std::size_t i = 0; i < kNumLabels; ++i) counts[i] += item.labels[i] ? 1 : 0;
  }
  return counts;
}

// --------------------------------------------------------------- ECG1 files

namespace {

constexpr char kMagic[4] = {'E', 'C', 'G', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace

std::vector<unsigned char> encode_record(const EcgRecord& record) {
  nlohmann::ordered_json header;
  header["id"] = record.id();
  header["sample_rate_hz"] = record.sample_rate_hz();
  header["leads"] = kLeadNames;
  header["n_samples"] = record.n_samples();
  const std::string text = header.dump();

  std::vector<unsigned char> out;
  out.reserve(8 + text.size() + record.data().size() * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (float v : record.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

EcgRecord decode_record(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not an ECG1 file");
  }
  const std::size_t header_len = get_u32(bytes.data() + 4);
  if (bytes.size() < 8 + header_len) throw Error(ErrorCode::HeaderMismatch, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + std::ptrdiff_t(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::HeaderMismatch, std::string("malformed header: ") + e.what());
  }
  std::string id;
  int rate = 0;
  std::size_t n = 0;
  std::vector<std::string> leads;
  try {
    id = header.at("id").get<std::string>();
    rate = header.at("sample_rate_hz").get<int>();
    n = header.at("n_samples").get<std::size_t>();
    leads = header.at("leads").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::HeaderMismatch, std::string("header field: ") + e.what());
  }
  if (leads.size() != kNumLeads || !std::equal(leads.begin(), leads.end(), kLeadNames.begin())) {
    throw Error(ErrorCode::HeaderMismatch, "unexpected lead list");
  }
  const std::size_t payload = bytes.size() - 8 - header_len;
  if (payload != kNumLeads * n * 4) {
    throw Error(ErrorCode::HeaderMismatch, "header declares " + std::to_string(n) +
                                               " samples but payload holds " +
                                               std::to_string(payload) + " bytes");
  }
  std::vector<float> signal(kNumLeads * n);
  const unsigned char* p = bytes.data() + 8 + header_len;
  for (std::size_t i = 0; i < signal.size(); ++i, p += 4) {
    signal[i] = std::bit_cast<float>(get_u32(p));
    if (!std::isfinite(signal[i])) {
      throw Error(ErrorCode::NonFinite, "sample " + std::to_string(i) + " of " + id);
    }
  }
  return EcgRecord(std::move(id), rate, n, std::move(signal));
}

void save_record(const EcgRecord& record, const std::filesystem::path& path) {
  write_file(path, encode_record(record));
}

EcgRecord load_record(const std::filesystem::path& path) { return decode_record(read_file(path)); }

// -------------------------------------------------------------- label files

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

std::map<std::string, LabelVector> parse_labels(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::UnknownColumn, "empty label file");

  const auto header = split_csv_line(line);
  if (header.size() != kNumLabels || header[0] != "record_id") {
    throw Error(ErrorCode::UnknownColumn, "label header must be record_id + 8 abnormalities");
  }
  for (std::size_t i = 1; i < kNumLabels; ++i) {
    if (header[i] != kLabelNames[i]) {
      throw Error(ErrorCode::UnknownColumn, "unexpected column '" + header[i] + "'");
    }
  }

  std::map<std::string, LabelVector> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != kNumLabels) {
      throw Error(ErrorCode::UnknownColumn, "line " + std::to_string(line_no) + " has " +
                                                std::to_string(cells.size()) + " cells");
    }
    std::array<bool, kNumLabels - 1> abnormal{};
    for (std::size_t i = 1; i < kNumLabels; ++i) {
      if (cells[i] == "1") {
        abnormal[i - 1] = true;
      } else if (cells[i] != "0") {
        throw Error(ErrorCode::NonBinaryCell,
                    "line " + std::to_string(line_no) + ": '" + cells[i] + "'");
      }
    }
    if (!out.emplace(cells[0], LabelVector::from_abnormalities(abnormal)).second) {
      throw Error(ErrorCode::DuplicateId, "record id '" + cells[0] + "' repeated");
    }
  }
  return out;
}

std::map<std::string, LabelVector> load_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_labels(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void save_labels(const std::map<std::string, LabelVector>& labels,
                 const std::filesystem::path& path) {
  std::string text = "record_id";
  for (std::size_t i = 1; i < kNumLabels; ++i) (text += ',') += kLabelNames[i];
  text += '\n';
  for (const auto& [id, lv] : labels) {
    text += id;
    for (std::size_t i = 1; i < kNumLabels; ++i) text += lv[i] ? ",1" : ",0";
    text += '\n';
  }
  write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

Dataset load_dataset(const std::filesystem::path& dir, Split split) {
  const auto labels = load_labels(dir / "labels.csv");
  Dataset ds(split);
  for (const auto& [id, lv] : labels) {
    const auto path = dir / (id + ".ecg");
    auto record = load_record(path);
    if (record.id() != id) {
      throw Error(ErrorCode::HeaderMismatch, path.string() + " declares id '" + record.id() + "'");
    }
    ds.add(std::move(record), lv);
  }
  return ds;
}

}  // namespace ecgdx
