#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ecgdx/nn/optim.hpp"
#include "test_util.hpp"

using namespace ecgdx;
using namespace ecgdx::nn;

namespace {

struct Scalar {
  Tensor<double> value{{1}, 0.0};
  Tensor<double> grad{{1}, 0.0};
  std::vector<ParamRef<double>> refs() { return {{"theta", &value, &grad}}; }
};

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  Scalar s;
  s.value[0] = 0.3;
  s.grad[0] = 1.0;
  AdamState<double> st;
  auto refs = s.refs();
  adam_step<double>(refs, st, 1e-4, 0.0);
  EXPECT_NEAR(s.value[0] - 0.3, -1e-4, 1e-6);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::mt19937_64 rng(1);
  Tensor<double> w = ecgdx::testing::random_tensor<double>({3, 4}, rng), g({3, 4});
  const Tensor<double> before = w;
  std::vector<ParamRef<double>> refs{{"w", &w, &g}};
  AdamState<double> st;
  for (int i = 0; i < 3; ++i) adam_step<double>(refs, st, 1e-2, 0.0);
  EXPECT_EQ(w, before);
}

TEST(Adam, MatchesReferenceRecurrence) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d;
  const double lr = 1e-3, wd = 1e-2;
  Tensor<double> w({5}), g({5});
  for (auto& v : w.values()) v = d(rng);
  std::vector<double> theta(w.values().begin(), w.values().end()), m(5, 0.0), v(5, 0.0);
  std::vector<ParamRef<double>> refs{{"w", &w, &g}};
  AdamState<double> st;
  for (int step = 1; step <= 2; ++step) {
    for (auto& x : g.values()) x = d(rng);
    adam_step<double>(refs, st, lr, wd);
    for (std::size_t i = 0; i < 5; ++i) {
      const double gi = g[i] + wd * theta[i];
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      const double mh = m[i] / (1 - std::pow(0.9, step)), vh = v[i] / (1 - std::pow(0.999, step));
      theta[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(w[i], theta[i], 1e-15);
    }
  }
}

TEST(Adam, WeightDecayPullsTowardZero) {
  Scalar s;
  s.value[0] = 2.0;
  AdamState<double> st;
  auto refs = s.refs();
  adam_step<double>(refs, st, 1e-3, 1e-1);
  EXPECT_LT(s.value[0], 2.0);
}

TEST(Plateau, ImprovingScoresKeepRate) {
  PlateauScheduler s(1e-4, 5, 3);
  for (int e = 0; e < 20; ++e) s.step(0.01 * e);
  EXPECT_EQ(s.lr(), 1e-4);
  EXPECT_EQ(s.reductions(), 0);
}

TEST(Plateau, OnePlateau) {
  const std::vector<double> flat(5, 0.5);
  EXPECT_DOUBLE_EQ(plateau_lr(flat, 1e-4, 5, 3), 2e-5);
  PlateauScheduler s(1e-4, 5, 3);
  std::vector<double> lrs;
  for (double h : flat) lrs.push_back(s.step(h));
  EXPECT_EQ(s.reductions(), 1);
  EXPECT_EQ(lrs[2], 1e-4);
  EXPECT_DOUBLE_EQ(lrs[3], 2e-5);
}

TEST(Plateau, TwoPlateaus) {
  const std::vector<double> flat(7, 0.5);
  EXPECT_DOUBLE_EQ(plateau_lr(flat, 1e-4, 5, 3), 4e-6);
}

TEST(Plateau, RateNeverIncreases) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    PlateauScheduler s(1e-3, 5, 1 + trial % 6);
    double prev = s.lr();
    for (int e = 0; e < 50; ++e) {
      const double lr = s.step(u(rng));
      EXPECT_LE(lr, prev);
      prev = lr;
    }
  }
}

TEST(Plateau, RejectsBadSettings) {
  EXPECT_THROW(PlateauScheduler(1e-4, 1.0, 3), Error);
  EXPECT_THROW(PlateauScheduler(1e-4, 5.0, 0), Error);
  EXPECT_THROW(PlateauScheduler(0.0, 5.0, 3), Error);
}
