#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "ecgdx/nn/tensor.hpp"

namespace ecgdx::testing {

template <typename T>
nn::Tensor<T> random_tensor(const nn::Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  nn::Tensor<T> t(shape);
  std::normal_distribution<double> d(0.0, scale);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(d(rng));
  return t;
}

/// Central differences of `loss` with respect to every entry of `param`.
inline nn::Tensor<double> numeric_grad(const std::function<double()>& loss, nn::Tensor<double>& param,
                                       double h = 1e-5) {
  nn::Tensor<double> g(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double keep = param[i];
    param[i] = keep + h;
    const double up = loss();
    param[i] = keep - h;
    const double down = loss();
    param[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
inline double max_rel_error(const nn::Tensor<double>& analytic, const nn::Tensor<double>& numeric,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  }
  return worst;
}

/// Gradient check that tolerates a ReLU or max-pool switch inside the stencil.
/// Uses a 4th-order central difference; where the forward and backward
/// 3-point differences disagree, a kink lies within 2h and the analytic value
/// is compared with the one-sided estimate from the smooth side instead.
/// An element that still disagrees is retried at h/10 and h/100, which moves a
/// nearby kink out of the stencil. Gradients below the rounding noise of the
/// stencil, about eps * |loss| / h, are compared against 1e5 times that noise.
inline double kink_aware_rel_error(const nn::Tensor<double>& analytic, const std::function<double()>& loss,
                                   nn::Tensor<double>& param, double tol, double h = 1e-6) {
  const double f0 = loss();
  auto element_error = [&](std::size_t i, double step) {
    const double floor =
        std::max(1e-6, 1e5 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0)) / step);
    auto rel = [floor](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}); };
    const double keep = param[i];
    double f[5];
    for (int k = -2; k <= 2; ++k) {
      if (k == 0) continue;
      param[i] = keep + k * step;
      f[k + 2] = loss();
    }
    param[i] = keep;
    const double central = (8.0 * (f[3] - f[1]) - (f[4] - f[0])) / (12.0 * step);
    const double forward = (-3.0 * f0 + 4.0 * f[3] - f[4]) / (2.0 * step);
    const double backward = (3.0 * f0 - 4.0 * f[1] + f[0]) / (2.0 * step);
    const double a = analytic[i];
    return rel(forward, backward) < tol ? rel(a, central) : std::min(rel(a, forward), rel(a, backward));
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    double e = element_error(i, h);
    for (double step = h / 10; e >= tol && step >= h / 100; step /= 10) e = std::min(e, element_error(i, step));
    worst = std::max(worst, e);
  }
  return worst;
}

/// sum(r * y): a scalar whose upstream gradient is r.
inline double project(const nn::Tensor<double>& y, const nn::Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

}  // namespace ecgdx::testing
