#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "s2g/model.hpp"
#include "support/fixtures.hpp"

namespace s2g {
namespace {

FeatureSequence random_features(const GeneratorConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  FeatureSequence f;
  f.values = Tensor({c.feature_frames, c.bands});
  for (auto& v : f.values.data()) v = static_cast<float>(rng.uniform(-12.0, 2.0));
  return f;
}

TEST(Generator, LayoutOrder) {
  GeneratorConfig c;
  c.widths = {8, 16};
  c.bottleneck_convs = 2;
  const auto p = GeneratorParams::init(c, 1);
  const std::vector<std::string> expected = {
      "enc0.weight",        "enc0.bias",        "enc1.weight", "enc1.bias", "bottleneck0.weight", "bottleneck0.bias",
      "bottleneck1.weight", "bottleneck1.bias", "dec1.weight", "dec1.bias", "dec0.weight",        "dec0.bias",
      "head.weight",        "head.bias"};
  EXPECT_EQ(p.params.names(), expected);
  EXPECT_EQ(p.params[0].shape(), (Shape{8, 64, 3}));
  EXPECT_EQ(p.params[8].shape(), (Shape{8, 32, 3}));   // dec1: bottleneck 16 + skip 16 -> 8
  EXPECT_EQ(p.params[10].shape(), (Shape{8, 16, 3}));  // dec0: 8 + skip 8 -> 8
  EXPECT_EQ(p.params[12].shape(), (Shape{147, 8, 1}));
}

TEST(Generator, ForwardShapeAndDeterminism) {
  GeneratorConfig c;
  const auto p = GeneratorParams::init(c, 9);
  const auto f = random_features(c, 1);
  const PoseSequence a = generator_forward(f, p, Skeleton::upper_body());
  EXPECT_EQ(a.frames, 30u);
  EXPECT_EQ(a.keypoints, 49u);
  EXPECT_DOUBLE_EQ(a.fps, 15.0);
  const PoseSequence b = generator_forward(f, GeneratorParams::init(c, 9), Skeleton::upper_body());
  EXPECT_EQ(a.coords, b.coords);
  for (float v : a.coords) EXPECT_TRUE(std::isfinite(v));
}

TEST(Generator, ZeroParamsGiveZeroPoses) {
  GeneratorConfig c;
  c.widths = {4};
  const PoseSequence out = generator_forward(random_features(c, 2), GeneratorParams::zeros(c), Skeleton::upper_body());
  for (float v : out.coords) EXPECT_EQ(v, 0.0f);
}

TEST(Generator, InitIsBoundedBySqrtFanIn) {
  GeneratorConfig c;
  c.widths = {8};
  const auto p = GeneratorParams::init(c, 3);
  const double bound = std::sqrt(1.0 / (64.0 * 3.0));
  for (float v : p.params[0].data()) EXPECT_LE(std::abs(v), bound);
  EXPECT_NE(p.params, GeneratorParams::init(c, 4).params);
}

TEST(Generator, ShapeChecks) {
  GeneratorConfig c;
  c.widths = {4};
  const auto p = GeneratorParams::init(c, 1);
  FeatureSequence bad;
  bad.values = Tensor({100, 64});
  EXPECT_THROW(generator_forward(bad, p, Skeleton::upper_body()), ShapeError);
  EXPECT_THROW(generator_forward(random_features(c, 1), p, testing::micro_skeleton()), ShapeError);
}

TEST(Config, Validation) {
  GeneratorConfig g;
  g.kernel = 2;
  EXPECT_THROW(g.validate(), InvalidArgument);
  g = {};
  g.widths = {};
  EXPECT_THROW(g.validate(), InvalidArgument);
  DiscriminatorConfig d;
  d.widths = {0};
  EXPECT_THROW(d.validate(), InvalidArgument);
}

TEST(Discriminator, LayoutAndForward) {
  DiscriminatorConfig c;
  const auto p = DiscriminatorParams::init(c, 5);
  EXPECT_EQ(p.params.names().back(), "head.bias");
  EXPECT_EQ(p.params[p.params.size() - 2].shape(), (Shape{1, 128}));
  Rng rng(1);
  PoseSequence seq(30, kPoseFps, Skeleton::upper_body());
  for (auto& v : seq.coords) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const float logit = discriminator_forward(motion(seq), p);
  EXPECT_TRUE(std::isfinite(logit));
  EXPECT_EQ(discriminator_forward(motion(seq), DiscriminatorParams::zeros(c)), 0.0f);
}

TEST(GeneratorLoss, ConstantOffsetHasNoBoneTerm) {
  Rng rng(2);
  PoseSequence gt(30, kPoseFps, Skeleton::upper_body());
  for (auto& v : gt.coords) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  PoseSequence pred = gt;
  for (auto& v : pred.coords) v += 0.25f;
  const auto loss = generator_loss(pred, gt, 0.5f);
  EXPECT_NEAR(loss.l1, 0.25, 1e-6);
  EXPECT_GT(loss.bone, 0.0f);  // random gt: bones do vary between frames
  EXPECT_NEAR(loss.total, loss.l1 + 0.5f * loss.bone, 1e-6);
  EXPECT_EQ(generator_loss(gt, gt, 0.0f).total, 0.0f);
}

TEST(GeneratorLoss, Errors) {
  PoseSequence a(3, kPoseFps, Skeleton::upper_body()), b(4, kPoseFps, Skeleton::upper_body());
  EXPECT_THROW(generator_loss(a, b, 0.5f), ShapeError);
  PoseSequence one(1, kPoseFps, Skeleton::upper_body());
  EXPECT_THROW(generator_loss(one, one, 0.5f), InvalidArgument);
}

TEST(GanLosses, ChanceLevelWithZeroDiscriminator) {
  Rng rng(3);
  PoseSequence a(30, kPoseFps, Skeleton::upper_body()), b(30, kPoseFps, Skeleton::upper_body());
  for (auto& v : a.coords) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto& v : b.coords) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto l = gan_losses(motion(a), motion(b), DiscriminatorParams::zeros(DiscriminatorConfig{}));
  EXPECT_NEAR(l.d_loss, 2.0 * std::numbers::ln2, 1e-6);
  EXPECT_NEAR(l.g_adv, std::numbers::ln2, 1e-6);
  EXPECT_NEAR(l.objective, -2.0 * std::numbers::ln2, 1e-6);
}

TEST(MomentumSgd, UpdateRule) {
  ParamSet set;
  set.add("w", Tensor({2}, std::vector<float>{1.0f, -1.0f}));
  MomentumSgd opt(0.1f, 0.9f);
  const std::vector<Tensor> grads = {Tensor({2}, std::vector<float>{1.0f, 2.0f})};
  opt.step(set, grads);
  EXPECT_FLOAT_EQ(set[0][0], 1.0f - 0.1f * 1.0f);
  EXPECT_FLOAT_EQ(set[0][1], -1.0f - 0.1f * 2.0f);
  opt.step(set, grads);  // v = 0.9 * g + g
  EXPECT_FLOAT_EQ(set[0][0], 0.9f - 0.1f * 1.9f);
  EXPECT_FLOAT_EQ(opt.velocity()[0][1], 3.8f);
  EXPECT_THROW(opt.step(set, {}), ShapeError);
}

TEST(MomentumSgd, ZeroLearningRateLeavesParams) {
  ParamSet set;
  set.add("w", Tensor({3}, 0.5f));
  const ParamSet before = set;
  MomentumSgd opt(0.0f, 0.9f);
  opt.step(set, std::vector<Tensor>{Tensor({3}, 7.0f)});
  EXPECT_EQ(set, before);
}

}  // namespace
}  // namespace s2g
