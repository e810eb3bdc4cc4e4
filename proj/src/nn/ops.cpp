#include "ecgdx/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ecgdx::nn {

namespace {

void require_rank(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": expected rank " + std::to_string(want) + ", got " + std::to_string(got));
  }
}

// Output positions t in [lo, hi) whose input index t*stride + k - pad is in range.
struct Range {
  std::size_t lo, hi;
};

Range valid_range(std::size_t k, std::size_t stride, std::size_t pad, std::size_t t_in, std::size_t t_out) {
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  if (t_in + pad <= k) return {0, 0};
  std::size_t hi = std::min(t_out, (t_in - 1 + pad - k) / stride + 1);
  return {lo, std::max(lo, hi)};
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

template <typename T>
void check_loss_inputs(const Tensor<T>& a, const Tensor<T>& labels, std::span<const double> weights) {
  require_rank(a.rank(), 2, "loss input");
  require_shape(labels, a.shape(), "labels");
  if (weights.size() != a.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(a.dim(1)) + " class weights, got " +
                                              std::to_string(weights.size()));
  }
  if (a.dim(0) == 0) throw Error(ErrorCode::ShapeMismatch, "loss over an empty batch");
}

// Strided convolutions read x[t * s + k - pad]. Splitting each input row into
// s phases, xp[phase][j] = x[j * s + phase], makes that a contiguous read of
// phase (k - pad) mod s at offset t + (k - pad - phase) / s.
struct Tap {
  std::size_t phase;
  std::ptrdiff_t offset;
};

Tap tap(std::size_t k, std::size_t stride, std::size_t pad) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const std::ptrdiff_t d = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
  const std::ptrdiff_t phase = ((d % s) + s) % s;
  return {static_cast<std::size_t>(phase), (d - phase) / s};
}

template <typename T>
void split_phases(const T* x, std::size_t t_in, std::size_t stride, std::size_t t_phase, T* out) {
  for (std::size_t ph = 0; ph < stride; ++ph) {
    T* dst = out + ph * t_phase;
    std::size_t j = 0;
    for (std::size_t q = ph; q < t_in; q += stride) dst[j++] = x[q];
    for (; j < t_phase; ++j) dst[j] = T(0);
  }
}

}  // namespace

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
  require_rank(x.rank(), 3, "conv1d input");
  require_rank(w.rank(), 3, "conv1d weight");
  const std::size_t B = x.dim(0), Cin = x.dim(1), Tin = x.dim(2);
  const std::size_t Cout = w.dim(0), K = w.dim(2);
  if (w.dim(1) != Cin) {
    throw Error(ErrorCode::ShapeMismatch, "conv1d: weight expects " + std::to_string(w.dim(1)) +
                                              " input channels, got " + std::to_string(Cin));
  }
  const std::size_t Tout = conv_output_length(Tin, K, stride, pad);
  if (Tout == 0) throw Error(ErrorCode::ShapeMismatch, "conv1d: output length would be zero");

  const std::size_t Tp = (Tin + stride - 1) / stride;
  std::vector<T> xp(Cin * stride * Tp);
  std::vector<Range> ranges(K);
  std::vector<Tap> taps(K);
  for (std::size_t k = 0; k < K; ++k) {
    ranges[k] = valid_range(k, stride, pad, Tin, Tout);
    taps[k] = tap(k, stride, pad);
  }

  Tensor<T> y({B, Cout, Tout});
  for (std::size_t b = 0; b < B; ++b) {
    const T* xb = x.data() + b * Cin * Tin;
    for (std::size_t ci = 0; ci < Cin; ++ci) split_phases(xb + ci * Tin, Tin, stride, Tp, xp.data() + ci * stride * Tp);
    for (std::size_t co = 0; co < Cout; ++co) {
      T* yr = y.data() + (b * Cout + co) * Tout;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* wr = w.data() + (co * Cin + ci) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const T wv = wr[k];
          const auto [lo, hi] = ranges[k];
          const T* xs = xp.data() + (ci * stride + taps[k].phase) * Tp + taps[k].offset;
#pragma omp simd
          for (std::size_t t = lo; t < hi; ++t) yr[t] += wv * xs[t];
        }
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, std::size_t stride,
                             std::size_t pad) {
  require_rank(x.rank(), 3, "conv1d input");
  require_rank(w.rank(), 3, "conv1d weight");
  const std::size_t B = x.dim(0), Cin = x.dim(1), Tin = x.dim(2);
  const std::size_t Cout = w.dim(0), K = w.dim(2);
  if (w.dim(1) != Cin) throw Error(ErrorCode::ShapeMismatch, "conv1d: weight/input channel mismatch");
  const std::size_t Tout = conv_output_length(Tin, K, stride, pad);
  require_shape(dy, {B, Cout, Tout}, "conv1d upstream gradient");

  const std::size_t Tp = (Tin + stride - 1) / stride;
  std::vector<T> xp(Cin * stride * Tp), dxp(Cin * stride * Tp);
  std::vector<Range> ranges(K);
  std::vector<Tap> taps(K);
  for (std::size_t k = 0; k < K; ++k) {
    ranges[k] = valid_range(k, stride, pad, Tin, Tout);
    taps[k] = tap(k, stride, pad);
  }

  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape())};
  for (std::size_t b = 0; b < B; ++b) {
    const T* xb = x.data() + b * Cin * Tin;
    for (std::size_t ci = 0; ci < Cin; ++ci) split_phases(xb + ci * Tin, Tin, stride, Tp, xp.data() + ci * stride * Tp);
    std::fill(dxp.begin(), dxp.end(), T(0));
    for (std::size_t co = 0; co < Cout; ++co) {
      const T* dyr = dy.data() + (b * Cout + co) * Tout;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* wr = w.data() + (co * Cin + ci) * K;
        T* dwr = g.dw.data() + (co * Cin + ci) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const T wv = wr[k];
          const auto [lo, hi] = ranges[k];
          const std::size_t base = (ci * stride + taps[k].phase) * Tp;
          const T* xs = xp.data() + base + taps[k].offset;
          T* dxs = dxp.data() + base + taps[k].offset;
          T acc = 0;
#pragma omp simd reduction(+ : acc)
          for (std::size_t t = lo; t < hi; ++t) acc += dyr[t] * xs[t];
#pragma omp simd
          for (std::size_t t = lo; t < hi; ++t) dxs[t] += wv * dyr[t];
          dwr[k] += acc;
        }
      }
    }
    T* dxb = g.dx.data() + b * Cin * Tin;
    for (std::size_t ci = 0; ci < Cin; ++ci) {
      for (std::size_t ph = 0; ph < stride; ++ph) {
        const T* src = dxp.data() + (ci * stride + ph) * Tp;
        std::size_t j = 0;
        for (std::size_t q = ph; q < Tin; q += stride) dxb[ci * Tin + q] = src[j++];
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormParams<T>& bn, Mode mode, BatchNormCache<T>* cache) {
  require_rank(x.rank(), 3, "batchnorm input");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  require_shape(bn.gamma, {C}, "batchnorm gamma");
  require_shape(bn.beta, {C}, "batchnorm beta");
  Tensor<T> y(x.shape());

  if (mode == Mode::Eval) {
    if (bn.updates == 0) {
      throw Error(ErrorCode::UninitializedStats, "batchnorm evaluated before any training update");
    }
    for (std::size_t c = 0; c < C; ++c) {
      const T scale = bn.gamma[c] / static_cast<T>(std::sqrt(static_cast<double>(bn.running_var[c]) + kBatchNormEps));
      const T shift = bn.beta[c] - scale * bn.running_mean[c];
      for (std::size_t b = 0; b < B; ++b) {
        const T* xr = x.data() + (b * C + c) * L;
        T* yr = y.data() + (b * C + c) * L;
        for (std::size_t t = 0; t < L; ++t) yr[t] = scale * xr[t] + shift;
      }
    }
    return y;
  }

  const std::size_t M = B * L;
  if (M == 0) throw Error(ErrorCode::ShapeMismatch, "batchnorm over an empty batch");
  if (cache) {
    cache->x_hat = Tensor<T>(x.shape());
    cache->inv_std.assign(C, T(0));
  }
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const T* xr = x.data() + (b * C + c) * L;
      for (std::size_t t = 0; t < L; ++t) sum += xr[t];
    }
    const double mean = sum / static_cast<double>(M);
    double ss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const T* xr = x.data() + (b * C + c) * L;
      for (std::size_t t = 0; t < L; ++t) {
        const double d = xr[t] - mean;
        ss += d * d;
      }
    }
    const double var = ss / static_cast<double>(M);
    const T inv_std = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
    const T m = static_cast<T>(mean);
    for (std::size_t b = 0; b < B; ++b) {
      const T* xr = x.data() + (b * C + c) * L;
      T* yr = y.data() + (b * C + c) * L;
      T* hr = cache ? cache->x_hat.data() + (b * C + c) * L : nullptr;
      for (std::size_t t = 0; t < L; ++t) {
        const T h = (xr[t] - m) * inv_std;
        if (hr) hr[t] = h;
        yr[t] = bn.gamma[c] * h + bn.beta[c];
      }
    }
    if (cache) cache->inv_std[c] = inv_std;
    const double unbiased = M > 1 ? ss / static_cast<double>(M - 1) : var;
    bn.running_mean[c] = static_cast<T>((1.0 - kBatchNormMomentum) * bn.running_mean[c] + kBatchNormMomentum * mean);
    bn.running_var[c] = static_cast<T>((1.0 - kBatchNormMomentum) * bn.running_var[c] + kBatchNormMomentum * unbiased);
  }
  ++bn.updates;
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& dy, const BatchNormCache<T>& cache, const Tensor<T>& gamma) {
  require_shape(dy, cache.x_hat.shape(), "batchnorm upstream gradient");
  const std::size_t B = dy.dim(0), C = dy.dim(1), L = dy.dim(2);
  const std::size_t M = B * L;
  BatchNormGrads<T> g{Tensor<T>(dy.shape()), Tensor<T>({C}), Tensor<T>({C})};
  for (std::size_t c = 0; c < C; ++c) {
    double sdy = 0.0, sdyh = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const T* dr = dy.data() + (b * C + c) * L;
      const T* hr = cache.x_hat.data() + (b * C + c) * L;
      for (std::size_t t = 0; t < L; ++t) {
        sdy += dr[t];
        sdyh += static_cast<double>(dr[t]) * hr[t];
      }
    }
    g.dbeta[c] = static_cast<T>(sdy);
    g.dgamma[c] = static_cast<T>(sdyh);
    const T k = gamma[c] * cache.inv_std[c] / static_cast<T>(M);
    const T mean_dy = static_cast<T>(sdy / static_cast<double>(M));
    const T mean_dyh = static_cast<T>(sdyh / static_cast<double>(M));
    for (std::size_t b = 0; b < B; ++b) {
      const T* dr = dy.data() + (b * C + c) * L;
      const T* hr = cache.x_hat.data() + (b * C + c) * L;
      T* out = g.dx.data() + (b * C + c) * L;
      for (std::size_t t = 0; t < L; ++t) {
        out[t] = k * static_cast<T>(M) * (dr[t] - mean_dy - hr[t] * mean_dyh);
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& y) {
  require_shape(dy, y.shape(), "relu upstream gradient");
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> global_pool_forward(const Tensor<T>& x, PoolMode mode, PoolCache<T>* cache) {
  require_rank(x.rank(), 3, "pool input");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (L == 0) throw Error(ErrorCode::ShapeMismatch, "pooling over an empty time axis");
  const std::size_t mult = pool_multiplier(mode);
  Tensor<T> y({B, mult * C});
  if (cache) {
    cache->argmax.assign(B * C, 0);
    cache->length = L;
  }
  const std::size_t max_offset = mode == PoolMode::Both ? C : 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* xr = x.data() + (b * C + c) * L;
      if (mode != PoolMode::Max) {
        double s = 0.0;
        for (std::size_t t = 0; t < L; ++t) s += xr[t];
        y.at(b, c) = static_cast<T>(s / static_cast<double>(L));
      }
      if (mode != PoolMode::Avg) {
        const std::size_t am = static_cast<std::size_t>(std::max_element(xr, xr + L) - xr);
        y.at(b, max_offset + c) = xr[am];
        if (cache) cache->argmax[b * C + c] = am;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> global_pool_backward(const Tensor<T>& dy, const PoolCache<T>& cache, std::size_t channels, PoolMode mode) {
  const std::size_t B = dy.dim(0), C = channels, L = cache.length;
  require_shape(dy, {B, pool_multiplier(mode) * C}, "pool upstream gradient");
  Tensor<T> dx({B, C, L});
  const std::size_t max_offset = mode == PoolMode::Both ? C : 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      T* dr = dx.data() + (b * C + c) * L;
      if (mode != PoolMode::Max) {
        const T g = dy.at(b, c) / static_cast<T>(L);
        for (std::size_t t = 0; t < L; ++t) dr[t] = g;
      }
      if (mode != PoolMode::Avg) dr[cache.argmax[b * C + c]] += dy.at(b, max_offset + c);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x.rank(), 2, "linear input");
  require_rank(w.rank(), 2, "linear weight");
  const std::size_t B = x.dim(0), I = x.dim(1), O = w.dim(0);
  if (w.dim(1) != I) {
    throw Error(ErrorCode::ShapeMismatch,
                "linear: weight expects " + std::to_string(w.dim(1)) + " inputs, got " + std::to_string(I));
  }
  require_shape(b, {O}, "linear bias");
  Tensor<T> y({B, O});
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      T acc = b[o];
      for (std::size_t i = 0; i < I; ++i) acc += w.at(o, i) * x.at(n, i);
      y.at(n, o) = acc;
    }
  }
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy) {
  const std::size_t B = x.dim(0), I = x.dim(1), O = w.dim(0);
  require_shape(dy, {B, O}, "linear upstream gradient");
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({O})};
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      const T d = dy.at(n, o);
      g.db[o] += d;
      for (std::size_t i = 0; i < I; ++i) {
        g.dw.at(o, i) += d * x.at(n, i);
        g.dx.at(n, i) += d * w.at(o, i);
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> logistic(const Tensor<T>& z) {
  Tensor<T> p(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double v = z[i];
    p[i] = static_cast<T>(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
  }
  return p;
}

template <typename T>
LossResult<T> weighted_bce_loss(const Tensor<T>& probs, const Tensor<T>& labels, std::span<const double> weights) {
  check_loss_inputs(probs, labels, weights);
  const std::size_t B = probs.dim(0), K = probs.dim(1);
  LossResult<T> r{T(0), Tensor<T>(probs.shape())};
  double total = 0.0;
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t i = 0; i < K; ++i) {
      const double p = std::clamp(static_cast<double>(probs.at(n, i)), kProbClamp, 1.0 - kProbClamp);
      const double y = labels.at(n, i);
      const double w = weights[i];
      total -= w * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
      r.dlogits.at(n, i) = static_cast<T>((p * (w * y + 1.0 - y) - w * y) / static_cast<double>(B));
    }
  }
  total /= static_cast<double>(B);
  if (!std::isfinite(total)) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");
  r.loss = static_cast<T>(total);
  return r;
}

template <typename T>
LossResult<T> weighted_bce_with_logits(const Tensor<T>& logits, const Tensor<T>& labels,
                                       std::span<const double> weights) {
  check_loss_inputs(logits, labels, weights);
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  LossResult<T> r{T(0), Tensor<T>(logits.shape())};
  double total = 0.0;
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t i = 0; i < K; ++i) {
      const double z = logits.at(n, i);
      const double y = labels.at(n, i);
      const double w = weights[i];
      // -log p = softplus(-z), -log(1 - p) = softplus(z)
      total += w * y * softplus(-z) + (1.0 - y) * softplus(z);
      const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      r.dlogits.at(n, i) = static_cast<T>((p * (w * y + 1.0 - y) - w * y) / static_cast<double>(B));
    }
  }
  total /= static_cast<double>(B);
  if (!std::isfinite(total)) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");
  r.loss = static_cast<T>(total);
  return r;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  require_shape(b, a.shape(), "elementwise add");
  T* ad = a.data();
  const T* bd = b.data();
  const std::size_t n = a.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) ad[i] += bd[i];
}

#define ECGDX_INSTANTIATE_OPS(T)                                                                              \
  template Tensor<T> conv1d_forward(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);            \
  template ConvGrads<T> conv1d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                                        std::size_t);                                                         \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, BatchNormParams<T>&, Mode, BatchNormCache<T>*);      \
  template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&, const BatchNormCache<T>&, const Tensor<T>&); \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                          \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> global_pool_forward(const Tensor<T>&, PoolMode, PoolCache<T>*);                          \
  template Tensor<T> global_pool_backward(const Tensor<T>&, const PoolCache<T>&, std::size_t, PoolMode);      \
  template Tensor<T> linear_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template LinearGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> logistic(const Tensor<T>&);                                                              \
  template LossResult<T> weighted_bce_loss(const Tensor<T>&, const Tensor<T>&, std::span<const double>);      \
  template LossResult<T> weighted_bce_with_logits(const Tensor<T>&, const Tensor<T>&, std::span<const double>); \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);

ECGDX_INSTANTIATE_OPS(float)
ECGDX_INSTANTIATE_OPS(double)

#undef ECGDX_INSTANTIATE_OPS

}  // namespace ecgdx::nn
