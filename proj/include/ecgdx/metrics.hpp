#pragma once

#include <array>
#include <span>
#include <string>

#include "ecgdx/core.hpp"

namespace ecgdx::metrics {

struct LabelCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

using ConfusionCounts = std::array<LabelCounts, kNumLabels>;
using PerLabel = std::array<double, kNumLabels>;

/// Throws LengthMismatch when the spans differ in size.
ConfusionCounts confusion(std::span<const LabelVector> preds, std::span<const LabelVector> truths);

/// F1 per label; 0 whenever precision or recall is undefined or both are 0.
PerLabel f1_per_label(const ConfusionCounts& counts);
PerLabel precision_per_label(const ConfusionCounts& counts);
PerLabel recall_per_label(const ConfusionCounts& counts);

/// Unweighted mean over the 9 labels.
double macro_f1(const PerLabel& f1);
/// Mean over the labels selected by `mask`; 0 when the mask is empty.
double macro_f1(const PerLabel& f1, const std::array<bool, kNumLabels>& mask);

/// Table layout: header `label,precision,recall,f1`, one row per label, then
/// an `Average` row carrying the macro F1.
std::string report_csv(const ConfusionCounts& counts);
std::string report_text(const ConfusionCounts& counts);

}  // namespace ecgdx::metrics
