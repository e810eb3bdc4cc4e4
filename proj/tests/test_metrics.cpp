#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "ecgdx/metrics.hpp"
#include "reference_scores.hpp"

using namespace ecgdx;
using namespace ecgdx::metrics;

namespace {

LabelVector random_labels(std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.25);
  std::array<bool, kNumLabels - 1> a{};
  for (auto&& f : a) f = coin(rng);
  return LabelVector::from_abnormalities(a);
}

}  // namespace

TEST(MacroF1, ReferenceScoreColumns) {
  for (const auto& col : ecgdx::testing::kReferenceScores) {
    EXPECT_NEAR(macro_f1(col.per_label), col.average, 0.0005) << col.name;
  }
}

TEST(MacroF1, AllOnes) {
  PerLabel ones;
  ones.fill(1.0);
  EXPECT_DOUBLE_EQ(macro_f1(ones), 1.0);
}

TEST(MacroF1, PermutationInvariantAndBounded) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    PerLabel f;
    for (auto& v : f) v = u(rng);
    const double m = macro_f1(f);
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
    std::shuffle(f.begin(), f.end(), rng);
    EXPECT_NEAR(macro_f1(f), m, 1e-15);
  }
}

TEST(MacroF1, Masked) {
  PerLabel f{1, 0.5, 0, 0, 0, 0.25, 0, 0, 0};
  std::array<bool, kNumLabels> mask{true, true, false, false, false, true, false, false, false};
  EXPECT_DOUBLE_EQ(macro_f1(f, mask), (1 + 0.5 + 0.25) / 3);
  mask.fill(false);
  EXPECT_EQ(macro_f1(f, mask), 0.0);
}

TEST(Confusion, MatchesBruteForce) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabelVector> p, t;
    for (int i = 0; i < 40; ++i) {
      p.push_back(random_labels(rng));
      t.push_back(random_labels(rng));
    }
    const auto c = confusion(p, t);
    const auto f1 = f1_per_label(c);
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        tp += p[i][l] && t[i][l];
        fp += p[i][l] && !t[i][l];
        fn += !p[i][l] && t[i][l];
        tn += !p[i][l] && !t[i][l];
      }
      EXPECT_EQ(c[l].tp, tp);
      EXPECT_EQ(c[l].fp, fp);
      EXPECT_EQ(c[l].fn, fn);
      EXPECT_EQ(c[l].tn, tn);
      const double expected = tp == 0 ? 0.0 : 2.0 * double(tp) / double(2 * tp + fp + fn);
      EXPECT_NEAR(f1[l], expected, 1e-12);
      EXPECT_GE(f1[l], 0.0);
      EXPECT_LE(f1[l], 1.0);
    }
  }
}

TEST(Confusion, LengthMismatch) {
  std::vector<LabelVector> a(3), b(2);
  try {
    confusion(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(F1, ZeroDenominatorIsZero) {
  std::vector<LabelVector> all_normal(5);
  const auto f1 = f1_per_label(confusion(all_normal, all_normal));
  EXPECT_EQ(f1[kNormal], 1.0);
  for (std::size_t l = 1; l < kNumLabels; ++l) EXPECT_EQ(f1[l], 0.0);
}

TEST(F1, SmallExample) {
  // Three AF truths, two predicted of which one is right.
  const auto af = LabelVector::from_abnormalities({true, false, false, false, false, false, false, false});
  std::vector<LabelVector> truth{af, af, af, LabelVector()}, pred{af, LabelVector(), LabelVector(), af};
  const auto c = confusion(pred, truth);
  EXPECT_EQ(c[kAF].tp, 1u);
  EXPECT_EQ(c[kAF].fp, 1u);
  EXPECT_EQ(c[kAF].fn, 2u);
  EXPECT_NEAR(precision_per_label(c)[kAF], 0.5, 1e-12);
  EXPECT_NEAR(recall_per_label(c)[kAF], 1.0 / 3, 1e-12);
  EXPECT_NEAR(f1_per_label(c)[kAF], 0.4, 1e-12);
}

TEST(Report, CsvLayout) {
  std::vector<LabelVector> v(4);
  const auto csv = report_csv(confusion(v, v));
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const auto nl = csv.find('\n', pos);
    lines.push_back(csv.substr(pos, nl - pos));
    pos = nl + 1;
  }
  ASSERT_EQ(lines.size(), 11u);
  EXPECT_EQ(lines[0], "label,precision,recall,f1");
  for (std::size_t l = 0; l < kNumLabels; ++l) EXPECT_EQ(lines[l + 1].substr(0, kLabelNames[l].size()), kLabelNames[l]);
  EXPECT_EQ(lines[10].substr(0, 8), "Average,");
  EXPECT_NE(report_text(confusion(v, v)).find("Average"), std::string::npos);
}
