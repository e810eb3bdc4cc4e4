#include "ecgdx/nn/model.hpp"

#include <cmath>
#include <random>

namespace ecgdx::nn {

namespace {

template <typename T>
Tensor<T> kaiming(std::size_t cout, std::size_t cin, std::size_t k, std::mt19937_64& rng) {
  Tensor<T> w({cout, cin, k});
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(cin * k)));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(dist(rng));
  return w;
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(static_cast<double>(t[i]))) {
      throw Error(ErrorCode::NonFinite, std::string("non-finite activation in ") + what);
    }
  }
}

template <typename T>
Tensor<T> scalar(double v) {
  return Tensor<T>({1}, static_cast<T>(v));
}

}  // namespace

template <typename T>
Tensor<T> residual_block_forward(const Tensor<T>& x, ResidualBlock<T>& block, Mode mode, BlockCache<T>* cache) {
  const std::size_t pad = block.conv1.dim(2) / 2;
  Tensor<T> h = conv1d_forward(x, block.conv1, block.stride, pad);
  h = batchnorm_forward(h, block.bn1, mode, cache ? &cache->bn1 : nullptr);
  Tensor<T> r1 = relu_forward(h);
  h = conv1d_forward(r1, block.conv2, 1, pad);
  h = batchnorm_forward(h, block.bn2, mode, cache ? &cache->bn2 : nullptr);
  if (block.has_projection()) {
    add_inplace(h, conv1d_forward(x, block.proj, block.stride, 0));
  } else {
    add_inplace(h, x);
  }
  Tensor<T> out = relu_forward(h);
  if (cache) {
    cache->x = x;
    cache->r1 = std::move(r1);
    cache->out = out;
  }
  return out;
}

template <typename T>
BlockGrads<T> residual_block_backward(const Tensor<T>& dy, const ResidualBlock<T>& block, const BlockCache<T>& cache) {
  const std::size_t pad = block.conv1.dim(2) / 2;
  BlockGrads<T> g;
  const Tensor<T> ds = relu_backward(dy, cache.out);
  auto b2 = batchnorm_backward(ds, cache.bn2, block.bn2.gamma);
  auto c2 = conv1d_backward(cache.r1, block.conv2, b2.dx, 1, pad);
  auto b1 = batchnorm_backward(relu_backward(c2.dx, cache.r1), cache.bn1, block.bn1.gamma);
  auto c1 = conv1d_backward(cache.x, block.conv1, b1.dx, block.stride, pad);
  g.dx = std::move(c1.dx);
  if (block.has_projection()) {
    auto cp = conv1d_backward(cache.x, block.proj, ds, block.stride, 0);
    add_inplace(g.dx, cp.dx);
    g.dproj = std::move(cp.dw);
  } else {
    add_inplace(g.dx, ds);
  }
  g.dconv1 = std::move(c1.dw);
  g.dconv2 = std::move(c2.dw);
  g.dgamma1 = std::move(b1.dgamma);
  g.dbeta1 = std::move(b1.dbeta);
  g.dgamma2 = std::move(b2.dgamma);
  g.dbeta2 = std::move(b2.dbeta);
  return g;
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  for (std::size_t w : config.widths) {
    if (w == 0) throw Error(ErrorCode::InvalidConfig, "channel widths must be positive");
  }
  if (config.in_channels == 0 || config.stem_kernel == 0 || config.block_kernel == 0 || config.num_outputs == 0) {
    throw Error(ErrorCode::InvalidConfig, "model dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  const std::size_t w0 = config.widths[0];
  stem_w_ = kaiming<T>(w0, config.in_channels, config.stem_kernel, rng);
  d_stem_w_ = Tensor<T>(stem_w_.shape());
  stem_bn_ = BatchNormParams<T>(w0);
  d_stem_gamma_ = Tensor<T>({w0});
  d_stem_beta_ = Tensor<T>({w0});

  std::size_t cin = w0;
  for (std::size_t i = 0; i < kNumBlocks; ++i) {
    const std::size_t cout = config.widths[i / kBlocksPerStage];
    ResidualBlock<T> b;
    b.stride = block_stride(i);
    b.conv1 = kaiming<T>(cout, cin, config.block_kernel, rng);
    b.conv2 = kaiming<T>(cout, cout, config.block_kernel, rng);
    if (cin != cout || b.stride != 1) b.proj = kaiming<T>(cout, cin, 1, rng);
    b.bn1 = BatchNormParams<T>(cout);
    b.bn2 = BatchNormParams<T>(cout);

    BlockGrads<T> g;
    g.dconv1 = Tensor<T>(b.conv1.shape());
    g.dconv2 = Tensor<T>(b.conv2.shape());
    if (b.has_projection()) g.dproj = Tensor<T>(b.proj.shape());
    g.dgamma1 = Tensor<T>({cout});
    g.dbeta1 = Tensor<T>({cout});
    g.dgamma2 = Tensor<T>({cout});
    g.dbeta2 = Tensor<T>({cout});
    blocks_.push_back(std::move(b));
    block_grads_.push_back(std::move(g));
    cin = cout;
  }
  if (layer_count() != kNumBlocks * kLayersPerBlock) {
    throw Error(ErrorCode::InvalidConfig, "network must have 96 counted layers");
  }

  head_w_ = Tensor<T>({config.num_outputs, config.head_inputs()});
  head_b_ = Tensor<T>({config.num_outputs});
  d_head_w_ = Tensor<T>(head_w_.shape());
  d_head_b_ = Tensor<T>(head_b_.shape());
  feature_mean_ = Tensor<T>({config.num_features});
  feature_std_ = Tensor<T>({config.num_features}, T(1));
}

template <typename T>
Tensor<T> Model<T>::logits(const Tensor<T>& x, const Tensor<T>& features, Mode mode) {
  if (x.rank() != 3 || x.dim(1) != config_.in_channels) {
    throw Error(ErrorCode::ShapeMismatch, "model input must be [B, " + std::to_string(config_.in_channels) +
                                              ", L], got " + shape_string(x.shape()));
  }
  const std::size_t B = x.dim(0);
  if (config_.use_features) require_shape(features, {B, config_.num_features}, "model features");
  const bool train = mode == Mode::Train;
  if (train) block_caches_.assign(blocks_.size(), {});

  Tensor<T> h = conv1d_forward(x, stem_w_, 2, config_.stem_kernel / 2);
  h = relu_forward(batchnorm_forward(h, stem_bn_, mode, train ? &stem_bn_cache_ : nullptr));
  if (train) {
    x_in_ = x;
    stem_out_ = h;
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = residual_block_forward(h, blocks_[i], mode, train ? &block_caches_[i] : nullptr);
  }
  const Tensor<T> pooled = global_pool_forward(h, config_.pool, train ? &pool_cache_ : nullptr);

  const std::size_t P = pooled.dim(1), I = config_.head_inputs();
  Tensor<T> head_in({B, I});
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t j = 0; j < P; ++j) head_in.at(n, j) = pooled.at(n, j);
    if (config_.use_features) {
      for (std::size_t j = 0; j < config_.num_features; ++j) head_in.at(n, P + j) = features.at(n, j);
    }
  }
  Tensor<T> z = linear_forward(head_in, head_w_, head_b_);
  check_finite(z, "model output");
  if (train) {
    head_in_ = std::move(head_in);
    has_cache_ = true;
  }
  return z;
}

template <typename T>
void Model<T>::backward(const Tensor<T>& dlogits) {
  if (!has_cache_) throw Error(ErrorCode::InvalidConfig, "backward called without a training forward pass");
  auto lg = linear_backward(head_in_, head_w_, dlogits);
  d_head_w_ = std::move(lg.dw);
  d_head_b_ = std::move(lg.db);

  const std::size_t B = dlogits.dim(0), C = config_.widths.back();
  const std::size_t P = pool_multiplier(config_.pool) * C;
  Tensor<T> dpool({B, P});
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t j = 0; j < P; ++j) dpool.at(n, j) = lg.dx.at(n, j);
  }
  Tensor<T> dh = global_pool_backward(dpool, pool_cache_, C, config_.pool);
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    BlockGrads<T> g = residual_block_backward(dh, blocks_[i], block_caches_[i]);
    dh = std::move(g.dx);
    BlockGrads<T>& dst = block_grads_[i];
    dst.dconv1 = std::move(g.dconv1);
    dst.dconv2 = std::move(g.dconv2);
    if (blocks_[i].has_projection()) dst.dproj = std::move(g.dproj);
    dst.dgamma1 = std::move(g.dgamma1);
    dst.dbeta1 = std::move(g.dbeta1);
    dst.dgamma2 = std::move(g.dgamma2);
    dst.dbeta2 = std::move(g.dbeta2);
  }
  auto bg = batchnorm_backward(relu_backward(dh, stem_out_), stem_bn_cache_, stem_bn_.gamma);
  d_stem_gamma_ = std::move(bg.dgamma);
  d_stem_beta_ = std::move(bg.dbeta);
  d_stem_w_ = conv1d_backward(x_in_, stem_w_, bg.dx, 2, config_.stem_kernel / 2).dw;
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::parameters() {
  std::vector<ParamRef<T>> p;
  p.push_back({"stem.conv.weight", &stem_w_, &d_stem_w_});
  p.push_back({"stem.bn.gamma", &stem_bn_.gamma, &d_stem_gamma_});
  p.push_back({"stem.bn.beta", &stem_bn_.beta, &d_stem_beta_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    ResidualBlock<T>& b = blocks_[i];
    BlockGrads<T>& g = block_grads_[i];
    p.push_back({pre + "conv1.weight", &b.conv1, &g.dconv1});
    p.push_back({pre + "bn1.gamma", &b.bn1.gamma, &g.dgamma1});
    p.push_back({pre + "bn1.beta", &b.bn1.beta, &g.dbeta1});
    p.push_back({pre + "conv2.weight", &b.conv2, &g.dconv2});
    p.push_back({pre + "bn2.gamma", &b.bn2.gamma, &g.dgamma2});
    p.push_back({pre + "bn2.beta", &b.bn2.beta, &g.dbeta2});
    if (b.has_projection()) p.push_back({pre + "proj.weight", &b.proj, &g.dproj});
  }
  p.push_back({"head.weight", &head_w_, &d_head_w_});
  p.push_back({"head.bias", &head_b_, &d_head_b_});
  return p;
}

template <typename T>
std::size_t Model<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value->size();
  return n;
}

template <typename T>
std::map<std::string, Tensor<T>> Model<T>::state() const {
  std::map<std::string, Tensor<T>> s;
  for (const auto& p : const_cast<Model*>(this)->parameters()) s.emplace(p.name, *p.value);
  auto add_bn = [&](const std::string& pre, const BatchNormParams<T>& bn) {
    s.emplace(pre + "running_mean", bn.running_mean);
    s.emplace(pre + "running_var", bn.running_var);
    s.emplace(pre + "updates", scalar<T>(static_cast<double>(bn.updates)));
  };
  add_bn("stem.bn.", stem_bn_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    add_bn(pre + "bn1.", blocks_[i].bn1);
    add_bn(pre + "bn2.", blocks_[i].bn2);
  }
  s.emplace("features.mean", feature_mean_);
  s.emplace("features.std", feature_std_);
  return s;
}

template <typename T>
void Model<T>::load_state(const std::map<std::string, Tensor<T>>& state) {
  auto take = [&](const std::string& name, Tensor<T>& dst) {
    auto it = state.find(name);
    if (it == state.end()) throw Error(ErrorCode::ShapeMismatch, "missing tensor " + name);
    require_shape(it->second, dst.shape(), name.c_str());
    dst = it->second;
  };
  for (const auto& p : parameters()) take(p.name, *p.value);
  auto take_bn = [&](const std::string& pre, BatchNormParams<T>& bn) {
    take(pre + "running_mean", bn.running_mean);
    take(pre + "running_var", bn.running_var);
    Tensor<T> updates({1});
    take(pre + "updates", updates);
    bn.updates = static_cast<std::size_t>(updates[0]);
  };
  take_bn("stem.bn.", stem_bn_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    take_bn(pre + "bn1.", blocks_[i].bn1);
    take_bn(pre + "bn2.", blocks_[i].bn2);
  }
  take("features.mean", feature_mean_);
  take("features.std", feature_std_);
  has_cache_ = false;
}

template class Model<float>;
template class Model<double>;

template Tensor<float> residual_block_forward(const Tensor<float>&, ResidualBlock<float>&, Mode, BlockCache<float>*);
template Tensor<double> residual_block_forward(const Tensor<double>&, ResidualBlock<double>&, Mode,
                                               BlockCache<double>*);
template BlockGrads<float> residual_block_backward(const Tensor<float>&, const ResidualBlock<float>&,
                                                   const BlockCache<float>&);
template BlockGrads<double> residual_block_backward(const Tensor<double>&, const ResidualBlock<double>&,
                                                    const BlockCache<double>&);

}  // namespace ecgdx::nn
