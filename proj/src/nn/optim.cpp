#include "ecgdx/nn/optim.hpp"

#include <cmath>

namespace ecgdx::nn {

template <typename T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state, double lr, double weight_decay) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.emplace_back(p.value->shape());
      state.v.emplace_back(p.value->shape());
    }
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T wd = static_cast<T>(weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& theta = *params[i].value;
    const Tensor<T>& grad = *params[i].grad;
    require_shape(grad, theta.shape(), params[i].name.c_str());
    require_shape(state.m[i], theta.shape(), "adam moment");
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const T g = grad[j] + wd * theta[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      theta[j] = static_cast<T>(theta[j] - lr * mh / (std::sqrt(vh) + state.eps));
    }
  }
}

template void adam_step(std::span<const ParamRef<float>>, AdamState<float>&, double, double);
template void adam_step(std::span<const ParamRef<double>>, AdamState<double>&, double, double);

PlateauScheduler::PlateauScheduler(double lr, double factor, int patience)
    : lr_(lr), factor_(factor), patience_(patience) {
  if (!(lr > 0.0) || !(factor > 1.0) || patience < 1) {
    throw Error(ErrorCode::InvalidConfig, "scheduler needs lr > 0, factor > 1 and patience >= 1");
  }
}

double PlateauScheduler::step(double score) {
  if (score > best_) {
    best_ = score;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ >= patience_) {
    lr_ /= factor_;
    bad_epochs_ = 0;
    ++reductions_;
  }
  return lr_;
}

double plateau_lr(std::span<const double> history, double lr, double factor, int patience) {
  PlateauScheduler s(lr, factor, patience);
  for (double h : history) s.step(h);
  return s.lr();
}

}  // namespace ecgdx::nn
