#include <gtest/gtest.h>

#include <cmath>

#include "bae/augment.hpp"
#include "bae/errors.hpp"
#include "bae/policy.hpp"

using namespace bae;

namespace {

Obs random_image(Rng& rng, std::size_t h = 9, std::size_t w = 9) {
  Obs o = Obs::image(3, h, w);
  for (double& v : o.data) v = rng.uniform();
  return o;
}

Obs random_vector(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return Obs::vector(std::move(v));
}

RolloutBuffer collect_chain(std::size_t n, std::uint64_t seed) {
  ChainMDP env(5);
  NetSpec spec;
  spec.obs_dim = 5;
  spec.action = env.spec().action;
  Rng init(seed), env_rng(seed + 1), pol(seed + 2);
  const ActorCritic net = ActorCritic::init(spec, init);
  return collect(net, env, LevelSampler(0, 1), n, env_rng, pol);
}

}  // namespace

TEST(AugmentTest, IdentityIsBitIdentical) {
  Rng rng(1);
  for (const Obs& o : {random_image(rng), random_vector(rng, 6)}) {
    const Obs out = apply(AugmentationSpec::identity(), o, rng);
    EXPECT_EQ(out.data, o.data);
  }
}

TEST(AugmentTest, DegenerateAmplitudeRange) {
  Rng rng(2);
  const Obs o = Obs::vector({1, 2, 3});
  EXPECT_EQ(apply(AugmentationSpec::amplitude(1.0, 1.0), o, rng).data, o.data);
}

TEST(AugmentTest, AmplitudeRatioConstantAndInRange) {
  Rng rng(3);
  const AugmentationSpec spec = AugmentationSpec::amplitude(0.8, 1.4);
  for (int trial = 0; trial < 500; ++trial) {
    const Obs o = random_vector(rng, 6);
    const Obs out = apply(spec, o, rng);
    const double ratio = out.data[0] / o.data[0];
    EXPECT_GE(ratio, 0.8);
    EXPECT_LE(ratio, 1.4);
    for (std::size_t i = 1; i < o.data.size(); ++i) EXPECT_NEAR(out.data[i] / o.data[i], ratio, 1e-12);
  }
}

TEST(AugmentTest, MethodDefaults) {
  const auto bae_spec = default_augmentation("bae", ObsKind::kVector);
  EXPECT_EQ(bae_spec.kind, AugKind::kAmplitudeScale);
  EXPECT_EQ(bae_spec.alpha, 0.8);
  EXPECT_EQ(bae_spec.beta, 1.4);
  for (const char* m : {"rad", "drac"}) {
    const auto s = default_augmentation(m, ObsKind::kVector);
    EXPECT_EQ(s.alpha, 0.6);
    EXPECT_EQ(s.beta, 1.2);
  }
  EXPECT_EQ(default_augmentation("bae", ObsKind::kImage).kind, AugKind::kCutoutColor);
  EXPECT_EQ(default_augmentation("bae", ObsKind::kVector).sampling, AugSampling::kPerObs);
}

TEST(AugmentTest, CutoutChangesOneRectangle) {
  Rng rng(4);
  const AugmentationSpec spec = AugmentationSpec::cutout();
  for (int trial = 0; trial < 300; ++trial) {
    const Obs o = random_image(rng);
    const AugDraw d = sample_draw(spec, o, rng);
    const Obs out = apply_draw(spec, d, o);
    ASSERT_EQ(out.data.size(), o.data.size());
    EXPECT_GE(d.box_h, 1u);
    EXPECT_LE(d.box_h, 4u);  // floor(0.5 * 9)
    EXPECT_LE(d.box_w, 4u);
    std::size_t changed_pixels = 0;
    std::size_t min_y = 99, max_y = 0, min_x = 99, max_x = 0;
    for (std::size_t y = 0; y < 9; ++y)
      for (std::size_t x = 0; x < 9; ++x) {
        const bool inside = y >= d.box_y && y < d.box_y + d.box_h && x >= d.box_x && x < d.box_x + d.box_w;
        bool changed = false;
        for (std::size_t c = 0; c < 3; ++c) {
          if (inside) EXPECT_EQ(out.at(c, y, x), d.color[c]);
          else EXPECT_EQ(out.at(c, y, x), o.at(c, y, x));
          changed = changed || out.at(c, y, x) != o.at(c, y, x);
        }
        if (changed) {
          ++changed_pixels;
          min_y = std::min(min_y, y);
          max_y = std::max(max_y, y);
          min_x = std::min(min_x, x);
          max_x = std::max(max_x, x);
        }
      }
    EXPECT_LE(changed_pixels, 16u);
    // Changed pixels lie in a single axis-aligned box.
    if (changed_pixels > 0) EXPECT_LE((max_y - min_y + 1) * (max_x - min_x + 1), d.box_h * d.box_w);
  }
}

TEST(AugmentTest, CropIsShiftedWindowOfPaddedImage) {
  Rng rng(5);
  const AugmentationSpec spec = AugmentationSpec::crop(1);
  const Obs o = random_image(rng);
  AugDraw d;
  d.crop_y = 0;
  d.crop_x = 2;
  const Obs out = apply_draw(spec, d, o);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 9; ++y) {
      EXPECT_EQ(out.at(c, y, 8), 0.0);
      if (y == 0) continue;
      for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(out.at(c, y, x), o.at(c, y - 1, x + 1));
    }
  d.crop_y = 1;
  d.crop_x = 1;
  EXPECT_EQ(apply_draw(spec, d, o).data, o.data);
  for (int i = 0; i < 100; ++i) {
    const AugDraw r = sample_draw(spec, o, rng);
    EXPECT_LE(r.crop_y, 2u);
    EXPECT_LE(r.crop_x, 2u);
  }
}

TEST(AugmentTest, IncompatibleKindsAreContractErrors) {
  Rng rng(6);
  EXPECT_THROW(apply(AugmentationSpec::cutout(), random_vector(rng, 3), rng), ContractError);
  EXPECT_THROW(apply(AugmentationSpec::crop(), random_vector(rng, 3), rng), ContractError);
  EXPECT_THROW(apply(AugmentationSpec::amplitude(0.8, 1.4), random_image(rng), rng), ContractError);
}

TEST(AugmentTest, InvalidSpecsAreConfigErrors) {
  EXPECT_THROW(AugmentationSpec::amplitude(1.4, 0.8).validate(), ConfigError);
  EXPECT_THROW(AugmentationSpec::amplitude(0.0, 1.0).validate(), ConfigError);
  EXPECT_THROW(AugmentationSpec::cutout(0.0, 0.5).validate(), ConfigError);
  EXPECT_THROW(AugmentationSpec::cutout(0.5, 1.5).validate(), ConfigError);
  EXPECT_THROW(parse_aug_kind("jitter"), ConfigError);
}

TEST(AugmentTest, ShapesPreserved) {
  Rng rng(7);
  for (const auto& spec : {AugmentationSpec::cutout(), AugmentationSpec::crop(2)}) {
    const Obs o = random_image(rng, 7, 5);
    const Obs out = apply(spec, o, rng);
    EXPECT_EQ(out.channels, o.channels);
    EXPECT_EQ(out.height, o.height);
    EXPECT_EQ(out.width, o.width);
    EXPECT_EQ(out.data.size(), o.data.size());
  }
}

TEST(AugmentBufferTest, IdentityBufferEqualsOriginal) {
  const RolloutBuffer buf = collect_chain(32, 1);
  Rng rng(1);
  const RolloutBuffer out = apply_to_buffer(AugmentationSpec::identity(), buf, rng);
  ASSERT_EQ(out.size(), buf.size());
  for (std::size_t t = 0; t < buf.size(); ++t) EXPECT_EQ(out.steps[t].obs.data, buf.steps[t].obs.data);
}

TEST(AugmentBufferTest, PerObservationScalesAndStreamsUntouched) {
  RolloutBuffer buf;
  Rng rng(8);
  for (int t = 0; t < 40; ++t) {
    Transition tr;
    tr.obs = random_vector(rng, 4);
    tr.action = Action::discrete(t % 2);
    tr.reward = rng.normal();
    tr.terminated = t % 7 == 6;
    tr.truncated = t % 11 == 10;
    buf.steps.push_back(tr);
  }
  buf.segment_ends = {6, 10, 39};
  buf.finalized = true;
  const RolloutBuffer before = buf;
  const RolloutBuffer out = apply_to_buffer(AugmentationSpec::amplitude(0.8, 1.4), buf, rng);
  std::vector<double> ratios;
  for (std::size_t t = 0; t < buf.size(); ++t) {
    EXPECT_EQ(out.steps[t].reward, buf.steps[t].reward);
    EXPECT_EQ(out.steps[t].terminated, buf.steps[t].terminated);
    EXPECT_EQ(out.steps[t].truncated, buf.steps[t].truncated);
    EXPECT_EQ(out.steps[t].action, buf.steps[t].action);
    const double r = out.steps[t].obs.data[0] / buf.steps[t].obs.data[0];
    for (std::size_t i = 1; i < 4; ++i) EXPECT_NEAR(out.steps[t].obs.data[i] / buf.steps[t].obs.data[i], r, 1e-12);
    ratios.push_back(r);
  }
  EXPECT_NE(ratios[0], ratios[1]);
  EXPECT_EQ(out.segment_ends, buf.segment_ends);
  for (std::size_t t = 0; t < buf.size(); ++t) EXPECT_EQ(buf.steps[t].obs.data, before.steps[t].obs.data);
}

TEST(AugmentBufferTest, PerBufferUsesOneDraw) {
  const RolloutBuffer buf = collect_chain(64, 2);
  AugmentationSpec spec = AugmentationSpec::amplitude(0.6, 1.2);
  spec.sampling = AugSampling::kPerBuffer;
  Rng rng(9);
  const RolloutBuffer out = apply_to_buffer(spec, buf, rng);
  double ratio = 0.0;
  for (std::size_t t = 0; t < buf.size(); ++t)
    for (std::size_t i = 0; i < 5; ++i)
      if (buf.steps[t].obs.data[i] != 0.0) {
        const double r = out.steps[t].obs.data[i] / buf.steps[t].obs.data[i];
        if (ratio == 0.0) ratio = r;
        EXPECT_EQ(r, ratio);
      }
}

TEST(AugmentBufferTest, SeededDeterminism) {
  const RolloutBuffer buf = collect_chain(32, 3);
  Rng a(10), b(10);
  const auto spec = AugmentationSpec::amplitude(0.8, 1.4);
  const RolloutBuffer x = apply_to_buffer(spec, buf, a), y = apply_to_buffer(spec, buf, b);
  for (std::size_t t = 0; t < buf.size(); ++t) EXPECT_EQ(x.steps[t].obs.data, y.steps[t].obs.data);
  ASSERT_EQ(x.bootstraps.size(), y.bootstraps.size());
  for (std::size_t i = 0; i < x.bootstraps.size(); ++i) EXPECT_EQ(x.bootstraps[i].obs.data, y.bootstraps[i].obs.data);
}

TEST(AugmentBufferTest, UnfinalizedBufferIsContractError) {
  RolloutBuffer buf = collect_chain(8, 4);
  buf.finalized = false;
  Rng rng(1);
  EXPECT_THROW(apply_to_buffer(AugmentationSpec::amplitude(0.8, 1.4), buf, rng), ContractError);
}
