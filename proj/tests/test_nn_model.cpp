#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ecgdx/nn/checkpoint.hpp"
#include "ecgdx/nn/model.hpp"
#include "test_util.hpp"

using namespace ecgdx;
using namespace ecgdx::nn;
using ecgdx::testing::kink_aware_rel_error;
using ecgdx::testing::max_rel_error;
using ecgdx::testing::numeric_grad;
using ecgdx::testing::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.widths = {2, 2, 3, 3};
  c.stem_kernel = 5;
  c.block_kernel = 3;
  return c;
}

template <typename T>
void randomize_head(Model<T>& m, std::mt19937_64& rng, double scale = 0.5) {
  m.head_weight() = random_tensor<T>(m.head_weight().shape(), rng, scale);
  m.head_bias() = random_tensor<T>(m.head_bias().shape(), rng, scale);
}

// One training pass so that batch-norm running statistics exist.
template <typename T>
void warm_up(Model<T>& m, std::size_t length, std::mt19937_64& rng) {
  m.logits(random_tensor<T>({4, 12, length}, rng), random_tensor<T>({4, 20}, rng), Mode::Train);
}

}  // namespace

TEST(Model, HasSixteenBlocksAndNinetySixLayers) {
  Model<float> m;
  EXPECT_EQ(m.block_count(), 16u);
  EXPECT_EQ(m.layer_count(), 96u);
  EXPECT_EQ(m.head_weight().shape(), (Shape{9, 2 * 256 + 20}));
  EXPECT_EQ(m.head_bias().shape(), (Shape{9}));
}

TEST(Model, HeadWidthFollowsAblationSwitches) {
  ModelConfig c;
  c.use_features = false;
  c.pool = PoolMode::Max;
  EXPECT_EQ(Model<float>(c).head_weight().shape(), (Shape{9, 256}));
}

TEST(Model, TimeAxisShrinksByFiveHundredTwelve) {
  std::size_t factor = 2;  // stem
  for (std::size_t i = 0; i < kNumBlocks; ++i) factor *= block_stride(i);
  EXPECT_EQ(factor, 512u);
  EXPECT_EQ(4096u / factor, 8u);
}

TEST(Model, ProjectionOnlyWhereShapeChanges) {
  Model<float> m;
  for (std::size_t i = 0; i < m.block_count(); ++i) {
    const auto& b = m.block(i);
    const bool changes = b.stride != 1 || b.conv1.dim(0) != b.conv1.dim(1);
    EXPECT_EQ(b.has_projection(), changes) << "block " << i;
    EXPECT_EQ(b.conv1.dim(2), 7u);
  }
}

TEST(Model, InitializationDefaults) {
  Model<float> m(ModelConfig::reduced(), 3);
  for (float v : m.head_weight().values()) EXPECT_EQ(v, 0.0f);
  for (std::size_t i = 0; i < m.block_count(); ++i) {
    for (float g : m.block(i).bn1.gamma.values()) EXPECT_EQ(g, 1.0f);
    for (float b : m.block(i).bn2.beta.values()) EXPECT_EQ(b, 0.0f);
  }
  // Kaiming scale: std close to sqrt(2 / fan_in) on the widest conv.
  const auto& w = m.block(15).conv2;
  double ss = 0;
  for (float v : w.values()) ss += double(v) * v;
  const double expected = 2.0 / (64 * 7);
  EXPECT_NEAR(ss / w.size(), expected, 0.1 * expected);
}

TEST(Model, ZeroHeadGivesOneHalf) {
  std::mt19937_64 rng(1);
  Model<float> m(ModelConfig::reduced(), 1);
  auto p = m.forward(random_tensor<float>({2, 12, 4096}, rng), random_tensor<float>({2, 20}, rng), Mode::Train);
  ASSERT_EQ(p.shape(), (Shape{2, 9}));
  for (float v : p.values()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Model, OutputsAreProbabilities) {
  for (int seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(10 + seed);
    Model<float> m(ModelConfig::reduced(), seed);
    randomize_head(m, rng, 1.0);
    auto x = random_tensor<float>({3, 12, 4096}, rng);
    auto f = random_tensor<float>({3, 20}, rng);
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      auto p = m.forward(x, f, mode);
      const auto z = m.logits(x, f, mode);
      ASSERT_EQ(p.shape(), (Shape{3, 9}));
      for (std::size_t i = 0; i < p.size(); ++i) {
        const float v = p.values()[i], logit = z.values()[i];
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
        // float saturates to exactly 0 or 1 only for large logits
        if (std::abs(logit) < 15.0f) {
          EXPECT_GT(v, 0.0f);
          EXPECT_LT(v, 1.0f);
        }
        EXPECT_NEAR(v, 1.0 / (1.0 + std::exp(-double(logit))), 1e-6);
      }
    }
  }
}

TEST(Model, EvalBeforeTrainingFails) {
  Model<float> m(ModelConfig::reduced());
  try {
    m.forward(Tensor<float>({1, 12, 1024}), Tensor<float>({1, 20}), Mode::Eval);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UninitializedStats);
  }
}

TEST(Model, RejectsWrongShapes) {
  Model<float> m(ModelConfig::reduced());
  EXPECT_THROW(m.forward(Tensor<float>({1, 11, 1024}), Tensor<float>({1, 20}), Mode::Train), Error);
  EXPECT_THROW(m.forward(Tensor<float>({1, 12, 1024}), Tensor<float>({1, 19}), Mode::Train), Error);
}

TEST(Model, EvalIsBatchSizeIndependent) {
  std::mt19937_64 rng(2);
  Model<float> m(ModelConfig::reduced(), 2);
  randomize_head(m, rng);
  warm_up(m, 2048, rng);
  auto xa = random_tensor<float>({2, 12, 2048}, rng), xb = random_tensor<float>({3, 12, 2048}, rng);
  auto fa = random_tensor<float>({2, 20}, rng), fb = random_tensor<float>({3, 20}, rng);
  Tensor<float> x({5, 12, 2048}), f({5, 20});
  std::copy(xa.values().begin(), xa.values().end(), x.data());
  std::copy(xb.values().begin(), xb.values().end(), x.data() + xa.size());
  std::copy(fa.values().begin(), fa.values().end(), f.data());
  std::copy(fb.values().begin(), fb.values().end(), f.data() + fa.size());
  auto pa = m.forward(xa, fa), pb = m.forward(xb, fb), p = m.forward(x, f);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(p[i], pa[i], 1e-6);
  for (std::size_t i = 0; i < pb.size(); ++i) EXPECT_NEAR(p[pa.size() + i], pb[i], 1e-6);
}

TEST(Model, FeatureChangeIsLocalToItsSample) {
  std::mt19937_64 rng(3);
  Model<float> m(ModelConfig::reduced(), 3);
  randomize_head(m, rng);
  warm_up(m, 2048, rng);
  auto x = random_tensor<float>({3, 12, 2048}, rng);
  auto f = random_tensor<float>({3, 20}, rng);
  auto before = m.forward(x, f);
  f.at(1, 3) *= 2.0f;
  auto after = m.forward(x, f);
  bool changed = false;
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t i = 0; i < 9; ++i) {
      if (n == 1) {
        changed |= before.at(n, i) != after.at(n, i);
      } else {
        EXPECT_EQ(before.at(n, i), after.at(n, i));
      }
    }
  }
  EXPECT_TRUE(changed);
}

TEST(Model, GradientsMatchFiniteDifferences) {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(900 + seed);
    Model<double> m(tiny_config(), seed);
    randomize_head(m, rng);
    auto x = random_tensor<double>({2, 12, 1024}, rng);
    auto f = random_tensor<double>({2, 20}, rng);
    Tensor<double> y({2, 9});
    y.at(0, 1) = 1;
    y.at(1, 0) = 1;
    y.at(1, 5) = 1;
    std::vector<double> w{1.0, 2.0, 1.5, 1.0, 1.0, 3.0, 1.0, 1.0, 1.0};
    auto loss = [&] { return weighted_bce_with_logits(m.logits(x, f, Mode::Train), y, w).loss; };
    m.backward(weighted_bce_with_logits(m.logits(x, f, Mode::Train), y, w).dlogits);
    for (auto& p : m.parameters()) {
      const Tensor<double> analytic = *p.grad;
      EXPECT_LT(kink_aware_rel_error(analytic, loss, *p.value, 1e-4), 1e-4) << p.name << " seed " << seed;
    }
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  std::mt19937_64 rng(4);
  ModelParams m(ModelConfig::reduced(), 4);
  randomize_head(m, rng);
  warm_up(m, 1024, rng);
  m.feature_mean() = random_tensor<float>({20}, rng);
  const auto bytes = encode_tensors(checkpoint_tensors(m));
  EXPECT_EQ(bytes.substr(0, 4), "ECKP");
  auto back = checkpoint_from_tensors(decode_tensors(bytes));
  EXPECT_EQ(back.model.config(), m.config());
  EXPECT_EQ(back.model.state(), m.state());
  EXPECT_EQ(encode_tensors(checkpoint_tensors(back.model)), bytes);
}

TEST(Checkpoint, LoadedModelReproducesOutputs) {
  std::mt19937_64 rng(5);
  ModelConfig c = ModelConfig::reduced();
  c.pool = PoolMode::Avg;
  ModelParams m(c, 5);
  randomize_head(m, rng);
  warm_up(m, 1024, rng);
  AdamState<float> adam;
  auto params = m.parameters();
  adam_step<float>(params, adam, 1e-3, 0.0);
  const auto path = std::filesystem::temp_directory_path() / "ecgdx_ckpt_test.eckp";
  save_checkpoint(m, &adam, path);
  auto back = load_checkpoint(path);
  std::filesystem::remove(path);
  ASSERT_TRUE(back.adam.has_value());
  EXPECT_EQ(back.adam->step, 1u);
  auto x = random_tensor<float>({2, 12, 1024}, rng);
  auto f = random_tensor<float>({2, 20}, rng);
  EXPECT_EQ(back.model.forward(x, f), m.forward(x, f));
}

TEST(Checkpoint, CorruptInputIsRejected) {
  ModelParams m(ModelConfig::reduced());
  std::string bytes = encode_tensors(checkpoint_tensors(m));
  auto code_of = [](const std::string& b) {
    try {
      decode_tensors(b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidConfig;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of(bad_magic), ErrorCode::BadMagic);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_EQ(code_of(bad_version), ErrorCode::UnsupportedVersion);
  EXPECT_EQ(code_of(bytes.substr(0, bytes.size() / 2)), ErrorCode::Io);
}
