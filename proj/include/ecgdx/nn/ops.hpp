#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ecgdx/nn/tensor.hpp"

namespace ecgdx::nn {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kProbClamp = 1e-7;

inline std::size_t conv_output_length(std::size_t t, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0 || t + 2 * pad < k) return 0;
  return (t + 2 * pad - k) / stride + 1;
}

// x [B, Cin, T], w [Cout, Cin, K] -> [B, Cout, T'].
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad);

template <typename T>
struct ConvGrads {
  Tensor<T> dx;
  Tensor<T> dw;
};

template <typename T>
ConvGrads<T> conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, std::size_t stride,
                             std::size_t pad);

template <typename T>
struct BatchNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  std::size_t updates = 0;

  explicit BatchNormParams(std::size_t channels = 0)
      : gamma({channels}, T(1)), beta({channels}, T(0)), running_mean({channels}, T(0)),
        running_var({channels}, T(1)) {}
};

template <typename T>
struct BatchNormCache {
  Tensor<T> x_hat;
  std::vector<T> inv_std;
};

enum class Mode { Train, Eval };

/// Train mode normalizes with batch statistics over (batch, time) and updates
/// the running estimates; eval mode throws UninitializedStats until at least
/// one training update happened.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormParams<T>& bn, Mode mode,
                            BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  Tensor<T> dx;
  Tensor<T> dgamma;
  Tensor<T> dbeta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& dy, const BatchNormCache<T>& cache, const Tensor<T>& gamma);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

/// `y` is the forward output; the mask is y > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& y);

enum class PoolMode { Avg, Max, Both };

inline std::size_t pool_multiplier(PoolMode mode) { return mode == PoolMode::Both ? 2 : 1; }

template <typename T>
struct PoolCache {
  std::vector<std::size_t> argmax;  // [B * C]
  std::size_t length = 0;
};

/// [B, C, T] -> [B, C] (avg or max) or [B, 2C] with the averages first.
template <typename T>
Tensor<T> global_pool_forward(const Tensor<T>& x, PoolMode mode, PoolCache<T>* cache = nullptr);

template <typename T>
Tensor<T> global_pool_backward(const Tensor<T>& dy, const PoolCache<T>& cache, std::size_t channels, PoolMode mode);

template <typename T>
Tensor<T> dual_global_pool(const Tensor<T>& x) {
  return global_pool_forward(x, PoolMode::Both);
}

// x [B, I], w [O, I], b [O] -> [B, O].
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
struct LinearGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  Tensor<T> db;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy);

template <typename T>
Tensor<T> logistic(const Tensor<T>& z);

template <typename T>
struct LossResult {
  T loss = 0;
  Tensor<T> dlogits;
};

/// L = -(1/B) sum_b sum_i [w_i y log p + (1 - y) log(1 - p)] evaluated on
/// probabilities clamped to [1e-7, 1 - 1e-7]. The returned gradient is with
/// respect to the logits, p = logistic(z). Throws NonFiniteLoss.
template <typename T>
LossResult<T> weighted_bce_loss(const Tensor<T>& probs, const Tensor<T>& labels, std::span<const double> weights);

/// Same loss computed from logits with log-sum-exp, which stays finite for
/// saturated outputs.
template <typename T>
LossResult<T> weighted_bce_with_logits(const Tensor<T>& logits, const Tensor<T>& labels,
                                       std::span<const double> weights);

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

}  // namespace ecgdx::nn
