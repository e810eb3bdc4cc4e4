#include "ecgdx/nn/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "ecgdx/dsp.hpp"
#include "ecgdx/metrics.hpp"

namespace ecgdx::nn {

namespace {

augment::CropWindow eval_window(const PreparedRecord& rec, std::size_t crop_len) {
  const std::size_t n = rec.signal.n_samples();
  if (n < crop_len) return {0, n};
  return augment::centre_window(n, crop_len);
}

augment::CropWindow train_window(const PreparedRecord& rec, std::size_t crop_len, bool heuristic,
                                 std::mt19937_64& rng) {
  const std::size_t n = rec.signal.n_samples();
  if (n < crop_len) return {0, n};
  return heuristic ? augment::mark_and_crop(n, rec.regions, crop_len, rng)
                   : augment::random_crop(n, crop_len, rng);
}

// Copies the window into row `b` of x [B, 12, crop_len]; the tail stays zero.
void fill_input(Tensor<float>& x, std::size_t b, const PreparedRecord& rec, const augment::CropWindow& w) {
  const std::size_t L = x.dim(2);
  for (std::size_t c = 0; c < kNumLeads; ++c) {
    const auto lead = rec.signal.lead(c);
    float* dst = x.data() + (b * kNumLeads + c) * L;
    std::copy_n(lead.begin() + static_cast<std::ptrdiff_t>(w.start), std::min(w.length, L), dst);
  }
}

void fill_features(Tensor<float>& f, std::size_t b, const PreparedRecord& rec, const augment::CropWindow& w,
                   const ModelParams& model) {
  features::FeatureMask missing{};
  const auto raw = window_features(rec, w, &missing);
  for (std::size_t j = 0; j < features::kNumFeatures; ++j) {
    const double s = model.feature_std()[j];
    f.at(b, j) = missing[j] ? 0.0f : static_cast<float>((raw[j] - model.feature_mean()[j]) / s);
  }
}

std::array<std::size_t, kNumLabels> counts_of(std::span<const PreparedRecord> records) {
  std::array<std::size_t, kNumLabels> c{};
  for (const auto& r : records) {
    for (std::size_t i = 0; i < kNumLabels; ++i) c[i] += r.labels[i];
  }
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || !(lr > 0.0) || weight_decay < 0.0 || !(plateau_factor > 1.0) ||
      plateau_patience < 1 || crop_len < 64 || threads < 1 || !(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "training configuration out of range");
  }
}

std::string format_log(std::span<const EpochLog> log) {
  std::string out = "epoch,train_loss,val_macro_f1,lr\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%.6g\n", e.epoch, e.train_loss, e.val_macro_f1, e.lr);
    out += buf;
  }
  return out;
}

PreparedRecord prepare_record(const EcgRecord& record, const LabelVector& labels) {
  PreparedRecord p{record, qrs::Fiducials{record.sample_rate_hz(), record.n_samples(), {}}, {}, labels};
  try {
    p.signal = dsp::denoise(record);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SignalTooShort) throw;
  }
  try {
    const auto peaks = qrs::detect_r_peaks(p.signal);
    p.fiducials = qrs::delineate(p.signal, peaks);
    p.regions = qrs::mark_irregular(p.signal, p.fiducials);
  } catch (const Error& e) {
    const auto c = e.code();
    if (c != ErrorCode::FlatSignal && c != ErrorCode::TooFewPeaks && c != ErrorCode::SignalTooShort) throw;
  }
  return p;
}

std::vector<PreparedRecord> prepare_dataset(const Dataset& dataset, unsigned threads) {
  std::vector<PreparedRecord> out(dataset.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next++) < dataset.size();) {
      try {
        out[i] = prepare_record(dataset[i].record, dataset[i].labels);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(dataset.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

features::FeatureVector window_features(const PreparedRecord& rec, const augment::CropWindow& window,
                                        features::FeatureMask* missing) {
  const EcgRecord part = rec.signal.slice(window.start, window.length);
  const qrs::Fiducials fid = rec.fiducials.window(window.start, window.length);
  if (missing) *missing = features::missing_features(fid);
  return features::extract_features(part, fid);
}

LabelVector decide_labels(const std::array<double, kNumLabels>& probs, double threshold) {
  std::array<bool, kNumLabels - 1> abnormal{};
  for (std::size_t i = 1; i < kNumLabels; ++i) abnormal[i - 1] = probs[i] >= threshold;
  // Normal-only covers both a confident Normal and the no-flag fallback.
  return LabelVector::from_abnormalities(abnormal);
}

std::vector<std::array<double, kNumLabels>> predict_probs(ModelParams& model, std::span<const PreparedRecord> records,
                                                         std::size_t crop_len, std::size_t batch_size) {
  std::vector<std::array<double, kNumLabels>> out;
  out.reserve(records.size());
  const std::size_t nf = model.config().num_features;
  for (std::size_t s = 0; s < records.size(); s += batch_size) {
    const std::size_t B = std::min(batch_size, records.size() - s);
    Tensor<float> x({B, kNumLeads, crop_len});
    Tensor<float> f({B, nf});
    for (std::size_t b = 0; b < B; ++b) {
      const auto w = eval_window(records[s + b], crop_len);
      fill_input(x, b, records[s + b], w);
      if (model.config().use_features) fill_features(f, b, records[s + b], w, model);
    }
    const Tensor<float> p = model.forward(x, f, Mode::Eval);
    for (std::size_t b = 0; b < B; ++b) {
      std::array<double, kNumLabels> row{};
      for (std::size_t i = 0; i < kNumLabels; ++i) row[i] = p.at(b, i);
      out.push_back(row);
    }
  }
  return out;
}

std::vector<LabelVector> predict_all(ModelParams& model, std::span<const PreparedRecord> records,
                                     std::size_t crop_len, double threshold) {
  std::vector<LabelVector> out;
  for (const auto& p : predict_probs(model, records, crop_len)) out.push_back(decide_labels(p, threshold));
  return out;
}

LabelVector predict(const EcgRecord& record, ModelParams& model, double threshold, std::size_t crop_len) {
  const PreparedRecord rec = prepare_record(record);
  return decide_labels(predict_probs(model, std::span(&rec, 1), crop_len).front(), threshold);
}

FitResult fit(const Dataset& train, const Dataset& valid, const TrainConfig& config, const EpochCallback& on_epoch) {
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (valid.empty()) throw Error(ErrorCode::EmptyDataset, "validation set is empty");
  config.validate();
  const auto tr = prepare_dataset(train, config.threads);
  const auto va = prepare_dataset(valid, config.threads);
  return fit(tr, va, config, on_epoch);
}

FitResult fit(std::span<const PreparedRecord> train, std::span<const PreparedRecord> valid,
              const TrainConfig& config, const EpochCallback& on_epoch) {
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (valid.empty()) throw Error(ErrorCode::EmptyDataset, "validation set is empty");
  config.validate();

  FitResult result{ModelParams(config.model, config.seed), {}, {}, {}, {}, -1};
  ModelParams& model = result.model;
  std::mt19937_64 rng(config.seed);

  const auto counts = counts_of(train);
  for (std::size_t i = 0; i < kNumLabels; ++i) result.active[i] = counts[i] > 0;
  result.weights = augment::class_weights(counts, train.size(), result.active);

  // Feature statistics from the centre window of every training record.
  std::vector<features::FeatureVector> rows;
  std::vector<features::FeatureMask> masks;
  for (const auto& r : train) {
    masks.emplace_back();
    rows.push_back(window_features(r, eval_window(r, config.crop_len), &masks.back()));
  }
  const auto stats = features::Standardizer::fit(rows, masks);
  for (std::size_t j = 0; j < features::kNumFeatures; ++j) {
    model.feature_mean()[j] = static_cast<float>(stats.mean[j]);
    model.feature_std()[j] = static_cast<float>(stats.std[j]);
  }

  std::vector<LabelVector> truths;
  for (const auto& r : valid) truths.push_back(r.labels);

  PlateauScheduler scheduler(config.lr, config.plateau_factor, config.plateau_patience);
  auto params = model.parameters();
  std::vector<std::size_t> order(train.size());
  std::map<std::string, Tensor<float>> best_state;
  double best_f1 = -1.0;
  const std::size_t L = config.crop_len, nf = config.model.num_features;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = scheduler.lr();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
      const std::size_t B = std::min(config.batch_size, order.size() - s);
      Tensor<float> x({B, kNumLeads, L});
      Tensor<float> f({B, nf});
      Tensor<float> y({B, kNumLabels});
      for (std::size_t b = 0; b < B; ++b) {
        const PreparedRecord& rec = train[order[s + b]];
        const auto w = train_window(rec, L, config.heuristic_crop, rng);
        fill_input(x, b, rec, w);
        if (config.model.use_features) fill_features(f, b, rec, w, model);
        for (std::size_t i = 0; i < kNumLabels; ++i) y.at(b, i) = rec.labels[i] ? 1.0f : 0.0f;
      }
      LossResult<float> loss;
      try {
        loss = weighted_bce_with_logits(model.logits(x, f, Mode::Train), y, result.weights);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteLoss && e.code() != ErrorCode::NonFinite) throw;
        throw Error(ErrorCode::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                                  std::to_string(s / config.batch_size) + ", lr " +
                                                  std::to_string(lr));
      }
      model.backward(loss.dlogits);
      adam_step<float>(params, result.adam, lr, config.weight_decay);
      loss_sum += static_cast<double>(loss.loss) * static_cast<double>(B);
      seen += B;
    }

    const auto preds = predict_all(model, valid, L, config.threshold);
    const double f1 = metrics::macro_f1(metrics::f1_per_label(metrics::confusion(preds, truths)), result.active);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_state = model.state();
      result.best_epoch = epoch;
    }
    const EpochLog row{epoch, loss_sum / static_cast<double>(seen), f1, lr};
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
    scheduler.step(f1);
  }
  model.load_state(best_state);
  return result;
}

}  // namespace ecgdx::nn
