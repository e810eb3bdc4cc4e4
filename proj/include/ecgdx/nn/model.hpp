#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ecgdx/nn/ops.hpp"

namespace ecgdx::nn {

inline constexpr std::size_t kNumStages = 4;
inline constexpr std::size_t kBlocksPerStage = 4;
inline constexpr std::size_t kNumBlocks = kNumStages * kBlocksPerStage;
/// conv, BN, ReLU twice per block.
inline constexpr std::size_t kLayersPerBlock = 6;

struct ModelConfig {
  std::array<std::size_t, kNumStages> widths{32, 64, 128, 256};
  std::size_t in_channels = kNumLeads;
  std::size_t stem_kernel = 15;
  std::size_t block_kernel = 7;
  std::size_t num_features = 20;
  std::size_t num_outputs = kNumLabels;
  PoolMode pool = PoolMode::Both;
  bool use_features = true;

  static ModelConfig reduced() {
    ModelConfig c;
    c.widths = {8, 16, 32, 64};
    return c;
  }

  std::size_t head_inputs() const {
    return pool_multiplier(pool) * widths.back() + (use_features ? num_features : 0);
  }
  bool operator==(const ModelConfig&) const = default;
};

/// Stride of block `index` (0-based): 2 on the first and third block of each
/// stage. With the stride-2 stem the time axis shrinks by 2^9.
inline std::size_t block_stride(std::size_t index) { return (index % kBlocksPerStage) % 2 == 0 ? 2 : 1; }

template <typename T>
struct ResidualBlock {
  Tensor<T> conv1;  // [Cout, Cin, K]
  Tensor<T> conv2;  // [Cout, Cout, K]
  Tensor<T> proj;   // [Cout, Cin, 1], empty for an identity shortcut
  BatchNormParams<T> bn1, bn2;
  std::size_t stride = 1;

  bool has_projection() const { return !proj.empty(); }
};

template <typename T>
struct BlockCache {
  Tensor<T> x, r1, out;
  BatchNormCache<T> bn1, bn2;
};

template <typename T>
Tensor<T> residual_block_forward(const Tensor<T>& x, ResidualBlock<T>& block, Mode mode,
                                 BlockCache<T>* cache = nullptr);

template <typename T>
struct BlockGrads {
  Tensor<T> dx, dconv1, dconv2, dproj, dgamma1, dbeta1, dgamma2, dbeta2;
};

template <typename T>
BlockGrads<T> residual_block_backward(const Tensor<T>& dy, const ResidualBlock<T>& block, const BlockCache<T>& cache);

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

/// Stem conv, 16 residual blocks, global pooling, optional feature
/// concatenation and a linear head producing 9 logits.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& config = {}, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }
  std::size_t block_count() const { return blocks_.size(); }
  std::size_t layer_count() const { return blocks_.size() * kLayersPerBlock; }
  const ResidualBlock<T>& block(std::size_t i) const { return blocks_.at(i); }
  ResidualBlock<T>& block(std::size_t i) { return blocks_.at(i); }

  /// x [B, 12, L], features [B, 20] (ignored when features are disabled).
  /// Train mode records what `backward` needs.
  Tensor<T> logits(const Tensor<T>& x, const Tensor<T>& features, Mode mode);
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& features, Mode mode = Mode::Eval) {
    return logistic(logits(x, features, mode));
  }

  /// Gradients of the last train-mode forward pass, overwritten in place.
  void backward(const Tensor<T>& dlogits);

  std::vector<ParamRef<T>> parameters();
  std::size_t parameter_count();

  /// Trainable parameters, running statistics and feature standardization
  /// vectors, keyed by dotted names.
  std::map<std::string, Tensor<T>> state() const;
  void load_state(const std::map<std::string, Tensor<T>>& state);

  Tensor<T>& feature_mean() { return feature_mean_; }
  Tensor<T>& feature_std() { return feature_std_; }
  const Tensor<T>& feature_mean() const { return feature_mean_; }
  const Tensor<T>& feature_std() const { return feature_std_; }
  Tensor<T>& head_weight() { return head_w_; }
  Tensor<T>& head_bias() { return head_b_; }

 private:
  ModelConfig config_;
  Tensor<T> stem_w_, d_stem_w_;
  BatchNormParams<T> stem_bn_;
  Tensor<T> d_stem_gamma_, d_stem_beta_;
  std::vector<ResidualBlock<T>> blocks_;
  std::vector<BlockGrads<T>> block_grads_;
  Tensor<T> head_w_, head_b_, d_head_w_, d_head_b_;
  Tensor<T> feature_mean_, feature_std_;

  // Train-mode caches.
  Tensor<T> x_in_, stem_out_;
  BatchNormCache<T> stem_bn_cache_;
  std::vector<BlockCache<T>> block_caches_;
  PoolCache<T> pool_cache_;
  Tensor<T> head_in_;
  bool has_cache_ = false;
};

using ModelParams = Model<float>;

extern template class Model<float>;
extern template class Model<double>;

}  // namespace ecgdx::nn
