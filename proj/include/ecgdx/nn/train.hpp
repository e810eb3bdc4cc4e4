#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ecgdx/augment.hpp"
#include "ecgdx/core.hpp"
#include "ecgdx/features.hpp"
#include "ecgdx/nn/model.hpp"
#include "ecgdx/nn/optim.hpp"
#include "ecgdx/qrs.hpp"

namespace ecgdx::nn {

struct TrainConfig {
  int epochs = 70;
  std::size_t batch_size = 40;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  double plateau_factor = 5.0;
  int plateau_patience = 5;
  std::uint64_t seed = 0;
  std::size_t crop_len = augment::kDefaultCropLength;
  /// Off: uniform random crops (the ablation baseline).
  bool heuristic_crop = true;
  double threshold = 0.5;
  /// Worker threads for per-record preprocessing. Never affects results.
  unsigned threads = 1;
  ModelConfig model;

  /// Throws InvalidConfig.
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
  double lr = 0.0;
};

/// CSV with header `epoch,train_loss,val_macro_f1,lr`.
std::string format_log(std::span<const EpochLog> log);

/// A record after denoising, beat detection, delineation and ectopy marking.
/// Records where no beats are found keep empty fiducials and regions.
struct PreparedRecord {
  EcgRecord signal;
  qrs::Fiducials fiducials;
  qrs::MarkedRegions regions;
  LabelVector labels;
};

PreparedRecord prepare_record(const EcgRecord& record, const LabelVector& labels = {});
std::vector<PreparedRecord> prepare_dataset(const Dataset& dataset, unsigned threads = 1);

/// Features of the window [start, start + length) of a prepared record.
features::FeatureVector window_features(const PreparedRecord& rec, const augment::CropWindow& window,
                                        features::FeatureMask* missing = nullptr);

/// Abnormality i is set iff p_i >= threshold; Normal is dropped when any
/// abnormality is set and is the fallback when nothing crosses the threshold.
LabelVector decide_labels(const std::array<double, kNumLabels>& probs, double threshold = 0.5);

/// Eval-mode probabilities on the centre window of each record.
std::vector<std::array<double, kNumLabels>> predict_probs(ModelParams& model, std::span<const PreparedRecord> records,
                                                         std::size_t crop_len, std::size_t batch_size = 32);

LabelVector predict(const EcgRecord& record, ModelParams& model, double threshold = 0.5,
                    std::size_t crop_len = augment::kDefaultCropLength);

std::vector<LabelVector> predict_all(ModelParams& model, std::span<const PreparedRecord> records,
                                     std::size_t crop_len, double threshold = 0.5);

struct FitResult {
  ModelParams model;
  AdamState<float> adam;
  std::vector<EpochLog> log;
  augment::LabelMask active{};
  augment::ClassWeights weights{};
  int best_epoch = -1;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on `train`, selecting the parameters with the best validation
/// macro-F1 over the labels present in `train`. Throws EmptyDataset and
/// NonFiniteLoss.
FitResult fit(const Dataset& train, const Dataset& valid, const TrainConfig& config,
              const EpochCallback& on_epoch = {});
FitResult fit(std::span<const PreparedRecord> train, std::span<const PreparedRecord> valid,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace ecgdx::nn
