#include "ecgdx/metrics.hpp"

#include <cstdio>

namespace ecgdx::metrics {

ConfusionCounts confusion(std::span<const LabelVector> preds, std::span<const LabelVector> truths) {
  if (preds.size() != truths.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions vs " +
                                               std::to_string(truths.size()) + " labels");
  }
  ConfusionCounts c{};
  for (std::size_t r = 0; r < preds.size(); ++r) {
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      const bool p = preds[r][i], t = truths[r][i];
      auto& k = c[i];
      if (p && t) ++k.tp;
      else if (p) ++k.fp;
      else if (t) ++k.fn;
      else ++k.tn;
    }
  }
  return c;
}

PerLabel precision_per_label(const ConfusionCounts& counts) {
  PerLabel out{};
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    const auto& k = counts[i];
    out[i] = k.tp + k.fp == 0 ? 0.0 : double(k.tp) / double(k.tp + k.fp);
  }
  return out;
}

PerLabel recall_per_label(const ConfusionCounts& counts) {
  PerLabel out{};
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    const auto& k = counts[i];
    out[i] = k.tp + k.fn == 0 ? 0.0 : double(k.tp) / double(k.tp + k.fn);
  }
  return out;
}

PerLabel f1_per_label(const ConfusionCounts& counts) {
  const auto p = precision_per_label(counts);
  const auto r = recall_per_label(counts);
  PerLabel out{};
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    const auto& k = counts[i];
    if (k.tp + k.fp == 0 || k.tp + k.fn == 0 || p[i] + r[i] == 0.0) continue;
    out[i] = 2.0 * p[i] * r[i] / (p[i] + r[i]);
  }
  return out;
}

double macro_f1(const PerLabel& f1) {
  double sum = 0.0;
  for (double v : f1) sum += v;
  return sum / double(kNumLabels);
}

double macro_f1(const PerLabel& f1, const std::array<bool, kNumLabels>& mask) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (!mask[i]) continue;
    sum += f1[i];
    ++n;
  }
  return n == 0 ? 0.0 : sum / double(n);
}

std::string report_csv(const ConfusionCounts& counts) {
  const auto p = precision_per_label(counts), r = recall_per_label(counts), f = f1_per_label(counts);
  std::string out = "label,precision,recall,f1\n";
  char line[128];
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    std::snprintf(line, sizeof line, "%s,%.3f,%.3f,%.3f\n", std::string(kLabelNames[i]).c_str(), p[i], r[i], f[i]);
    out += line;
  }
  std::snprintf(line, sizeof line, "Average,,,%.3f\n", macro_f1(f));
  return out + line;
}

std::string report_text(const ConfusionCounts& counts) {
  const auto p = precision_per_label(counts), r = recall_per_label(counts), f = f1_per_label(counts);
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %9s %9s %9s\n", "", "Precision", "Recall", "F1");
  out += line;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    std::snprintf(line, sizeof line, "%-8s %9.3f %9.3f %9.3f\n", std::string(kLabelNames[i]).c_str(), p[i], r[i], f[i]);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-8s %9s %9s %9.3f\n", "Average", "", "", macro_f1(f));
  return out + line;
}

}  // namespace ecgdx::metrics
