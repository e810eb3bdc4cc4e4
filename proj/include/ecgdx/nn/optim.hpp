#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ecgdx/nn/model.hpp"

namespace ecgdx::nn {

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

/// One bias-corrected Adam update. Weight decay is folded into the gradient
/// (g + wd * theta) before the moments. Moments are created on first use.
template <typename T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state, double lr, double weight_decay);

/// Divides the learning rate by `factor` once the best validation score has
/// not improved for `patience` consecutive epochs. Higher scores are better.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor = 5.0, int patience = 5);

  /// Feeds one epoch's validation score and returns the learning rate to use next.
  double step(double score);

  double lr() const { return lr_; }
  double best() const { return best_; }
  int reductions() const { return reductions_; }

 private:
  double lr_;
  double factor_;
  int patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
  int reductions_ = 0;
};

/// Learning rate after replaying a score history through a fresh scheduler.
double plateau_lr(std::span<const double> history, double lr, double factor, int patience);

}  // namespace ecgdx::nn
