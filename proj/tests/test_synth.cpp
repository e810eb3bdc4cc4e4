#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "ecgdx/synth.hpp"

using namespace ecgdx;
using namespace ecgdx::synth;

TEST(Synth, NormalSixtyBpmHasTenBeats) {
  SynthSpec spec;
  const auto out = generate(spec);
  EXPECT_TRUE(out.labels.normal());
  ASSERT_EQ(out.truth.beat_times_s.size(), 10u);
  for (std::size_t i = 1; i < 10; ++i)
    EXPECT_NEAR(out.truth.beat_times_s[i] - out.truth.beat_times_s[i - 1], 1.0, 1e-12);
  EXPECT_TRUE(out.truth.regions.empty());
}

TEST(Synth, SinglePvc) {
  SynthSpec spec;
  spec.with(kPVC);
  spec.seed = 2;
  const auto out = generate(spec);
  EXPECT_EQ(out.labels.to_string(), "PVC");
  EXPECT_EQ(out.truth.regions.size(), 1u);
  std::size_t pvc = 0;
  for (const auto& b : out.truth.beats) {
    if (b.kind != BeatTruth::Kind::PVC) continue;
    ++pvc;
    EXPECT_FALSE(b.has_p);
    EXPECT_GE(b.qrs_offset_s - b.qrs_onset_s, 0.140 - 1e-9);
  }
  EXPECT_EQ(pvc, 1u);
}

TEST(Synth, SameSeedSameRecord) {
  SynthSpec spec;
  spec.with(kAF);
  spec.noise.white_sigma_mv = 0.1;
  spec.seed = 17;
  EXPECT_EQ(generate(spec).record, generate(spec).record);
  auto other = spec;
  other.seed = 18;
  EXPECT_NE(generate(spec).record, generate(other).record);
}

TEST(Synth, AbnormalitiesViolateNormalThresholds) {
  SynthSpec fdavb;
  fdavb.with(kFDAVB);
  EXPECT_GE(generate(fdavb).truth.pr_ms, 220.0);
  SynthSpec crbbb;
  crbbb.with(kCRBBB);
  EXPECT_GE(generate(crbbb).truth.qrs_ms, 130.0);
}

TEST(Synth, AfRhythmIsIrregularWithoutP) {
  SynthSpec spec;
  spec.with(kAF);
  spec.duration_s = 30;
  spec.seed = 5;
  const auto out = generate(spec);
  const auto& t = out.truth.beat_times_s;
  std::vector<double> rr;
  for (std::size_t i = 1; i < t.size(); ++i) rr.push_back(t[i] - t[i - 1]);
  double mean = 0, var = 0;
  for (double r : rr) mean += r / double(rr.size());
  for (double r : rr) var += (r - mean) * (r - mean) / double(rr.size());
  EXPECT_GE(std::sqrt(var) / mean, 0.2);
  for (const auto& b : out.truth.beats) EXPECT_FALSE(b.has_p);
}

TEST(Synth, AmplitudeBoundAndFinite) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SynthSpec spec;
    spec.seed = seed;
    spec.abnormal[seed % 8] = true;
    spec.abnormal[(seed / 8) % 8] = true;
    spec.heart_rate_bpm = 45 + double(seed * 3 % 90);
    spec.noise = {0.05, 0.3, 0.4, 0.05, 50};
    const auto out = generate(spec);
    for (float v : out.record.data()) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_LE(std::abs(v), 5.0f);
    }
  }
}

TEST(Synth, InvalidSpecs) {
  SynthSpec shortspec;
  shortspec.duration_s = 8.0;
  EXPECT_THROW(generate(shortspec), Error);
  SynthSpec longspec;
  longspec.duration_s = 61.0;
  EXPECT_THROW(generate(longspec), Error);
  EXPECT_THROW(parse_mix("bogus=3"), Error);
  EXPECT_THROW(parse_mix("normal+af=3"), Error);
}

TEST(Synth, ParseMix) {
  const auto mix = parse_mix("normal=50,PVC=50,af+pac=2");
  ASSERT_EQ(mix.size(), 3u);
  EXPECT_TRUE(mix[0].first.normal());
  EXPECT_EQ(mix[0].second, 50u);
  EXPECT_EQ(mix[2].first.to_string(), "AF+PAC");
}

TEST(SynthDataset, ExactCounts) {
  const auto d = generate_dataset(parse_mix("normal=50,pvc=50"), 7);
  EXPECT_EQ(d.dataset.size(), 100u);
  const auto c = d.dataset.label_counts();
  EXPECT_EQ(c[kNormal], 50u);
  EXPECT_EQ(c[kPVC], 50u);
  EXPECT_EQ(d.truth.size(), 100u);
}

TEST(SynthDataset, SeedsChangeNoiseNotCounts) {
  const auto mix = parse_mix("normal=5,af=5");
  const auto a = generate_dataset(mix, 1), b = generate_dataset(mix, 2);
  EXPECT_EQ(a.dataset.label_counts(), b.dataset.label_counts());
  for (std::size_t i = 0; i < a.dataset.size(); ++i) EXPECT_NE(a.dataset[i].record.data(), b.dataset[i].record.data());
}

TEST(SynthDataset, RoundTripThroughLoaders) {
  const auto d = generate_dataset(parse_mix("normal=3,pac=3,crbbb+twc=2"), 9);
  const auto dir = std::filesystem::temp_directory_path() / "ecgdx_synth_rt";
  std::filesystem::remove_all(dir);
  write_dataset(d, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "labels.csv"));
  const auto back = load_dataset(dir);
  ASSERT_EQ(back.size(), d.dataset.size());
  for (const auto& item : d.dataset) {
    EXPECT_TRUE(std::filesystem::exists(dir / (item.record.id() + ".truth.json")));
    bool found = false;
    for (const auto& other : back) {
      if (other.record.id() != item.record.id()) continue;
      found = true;
      EXPECT_EQ(other.record, item.record);
      EXPECT_EQ(other.labels, item.labels);
    }
    EXPECT_TRUE(found);
  }
  std::filesystem::remove_all(dir);
}

TEST(SynthDataset, TruthJsonFields) {
  SynthSpec spec;
  spec.with(kPVC);
  const auto json = truth_to_json(generate(spec).truth);
  for (const char* key : {"\"beat_times_s\"", "\"regions\"", "\"pr_ms\"", "\"qrs_ms\""})
    EXPECT_NE(json.find(key), std::string::npos) << key;
}
