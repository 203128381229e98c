#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "s2g/train.hpp"
#include "support/fixtures.hpp"

namespace s2g {
namespace {

WavData silence(double seconds, std::uint32_t rate = kDefaultSampleRate) {
  return {std::vector<float>(static_cast<std::size_t>(seconds * rate), 0.0f), rate};
}

PoseTrack still_track(double seconds, double fps) {
  const auto sk = Skeleton::upper_body();
  PoseTrack track;
  track.names = sk->names();
  track.fps = fps;
  const auto frame = synth_pose_frame(0.5, 440.0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(seconds * fps); ++i) track.frames.emplace_back(frame);
  return track;
}

GeneratorConfig small_generator() {
  GeneratorConfig c;
  c.widths = {8, 16};
  return c;
}

DiscriminatorConfig small_discriminator() {
  DiscriminatorConfig c;
  c.widths = {8};
  return c;
}

// ---- dataset --------------------------------------------------------------------------

TEST(Dataset, TenSecondsGivesFivePairs) {
  const MelExtractor mel;
  const Dataset d = build_dataset(silence(10.0), still_track(10.0, 30.0), Skeleton::upper_body(), mel, "s", "src");
  ASSERT_EQ(d.size(), 5u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d[i].index, i);
    EXPECT_EQ(d[i].target.frames, 30u);
    EXPECT_EQ(d[i].features.frames(), 198u);
    EXPECT_EQ(d[i].features.chunk_id, i + 1);
  }
}

TEST(Dataset, GapDropsOnlyItsChunk) {
  const MelExtractor mel;
  PoseTrack track = still_track(6.0, 30.0);
  track.frames[75].reset();  // inside chunk 2 of 3
  const Dataset d = build_dataset(silence(6.0), track, Skeleton::upper_body(), mel, "s", "src");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].index, 0u);
  EXPECT_EQ(d[1].index, 2u);
}

TEST(Dataset, ResamplesAudioAndPoses) {
  const MelExtractor mel;
  const Dataset d = build_dataset(silence(4.0, 44100), still_track(4.0, 25.0), Skeleton::upper_body(), mel, "s", "src");
  EXPECT_EQ(d.size(), 2u);
}

TEST(Dataset, Errors) {
  const MelExtractor mel;
  const auto sk = Skeleton::upper_body();
  PoseTrack empty;
  empty.fps = 30.0;
  EXPECT_THROW(build_dataset(silence(4.0), empty, sk, mel, "s", "src"), InvalidArgument);
  EXPECT_THROW(build_dataset(silence(4.0), still_track(4.0, 10.0), sk, mel, "s", "src"), InvalidArgument);
  EXPECT_THROW(build_dataset(silence(1.0), still_track(4.0, 30.0), sk, mel, "s", "src"), InvalidArgument);
  EXPECT_THROW(build_dataset(WavData{}, still_track(4.0, 30.0), sk, mel, "s", "src"), InvalidArgument);
  PoseTrack renamed = still_track(4.0, 30.0);
  renamed.names[0] = "pelvis";
  EXPECT_THROW(build_dataset(silence(4.0), renamed, sk, mel, "s", "src"), InvalidArgument);
}

TEST(Dataset, EmptyPoseFileIsAnError) {
  testing::TempDir tmp;
  write_wav(tmp / "a.wav", silence(4.0).samples, kDefaultSampleRate);
  { std::ofstream f(tmp / "p.pose"); }
  EXPECT_THROW(build_dataset({{tmp / "a.wav", tmp / "p.pose", "s", "src"}}, Skeleton::upper_body()), Error);
}

TEST(Dataset, SplitHoldsOutTheTailOfEachSource) {
  Dataset d;
  for (const char* src : {"a", "b"}) {
    for (std::size_t i = 0; i < 10; ++i) {
      TrainingPair p;
      p.source = src;
      p.index = i;
      d.push_back(p);
    }
  }
  const auto split = split_validation(d, 0.1);
  ASSERT_EQ(split.validation.size(), 2u);
  EXPECT_EQ(split.validation[0].index, 9u);
  EXPECT_EQ(split.validation[1].source, "b");
  EXPECT_EQ(split.train.size(), 18u);
  EXPECT_EQ(split_validation(Dataset(d.begin(), d.begin() + 3), 0.1).validation.size(), 1u);
  EXPECT_THROW(split_validation(d, 1.0), InvalidArgument);
}

// ---- synthetic corpus ---------------------------------------------------------------------

TEST(Synth, SameSeedIsBitIdentical) {
  const SynthCorpus a = synth_corpus(7, 3);
  const SynthCorpus b = synth_corpus(7, 3);
  EXPECT_EQ(a.audio.samples, b.audio.samples);
  EXPECT_EQ(a.poses.frames, b.poses.frames);
  EXPECT_NE(a.audio.samples, synth_corpus(8, 3).audio.samples);
  EXPECT_EQ(a.audio.samples.size(), 3u * 32000);
  EXPECT_EQ(a.poses.frames.size(), 90u);
}

TEST(Synth, SilenceGivesRestPose) {
  const SynthClip clip = render_synth_clip(silent_synth_params());
  for (float v : clip.audio) EXPECT_EQ(v, 0.0f);
  const auto rest = synth_pose_frame(0.0, SynthRig::kToneLow);
  for (std::size_t t = 0; t < clip.pose.frames; ++t) {
    EXPECT_TRUE(std::equal(rest.begin(), rest.end(), clip.pose.frame(t).begin()));
  }
  // At rest the arms hang straight down.
  const auto sk = Skeleton::upper_body();
  EXPECT_NEAR(clip.pose.at(0, *sk->find("l_wrist"))[1], SynthRig::kShoulderHeight - SynthRig::kUpperArm - SynthRig::kForearm,
              1e-6);
}

TEST(Synth, InverseOracleRecoversEnvelope) {
  Rng rng(5);
  const auto sk = Skeleton::upper_body();
  const std::size_t wrist = *sk->find("l_wrist");
  for (int trial = 0; trial < 10; ++trial) {
    const SynthClip clip = render_synth_clip(random_synth_params(rng));
    const double flexion = SynthRig::flexion_for_tone(clip.params.tone_hz);
    const double reach = SynthRig::kUpperArm + SynthRig::kForearm * std::cos(flexion);
    for (std::size_t t = 0; t < clip.pose.frames; ++t) {
      const double rise = clip.pose.at(t, wrist)[1] - SynthRig::kShoulderHeight + reach;
      EXPECT_NEAR(rise / SynthRig::kLeftLift, clip.envelope[t], 1e-3);
    }
  }
}

TEST(Synth, BonesAreRigid) {
  Rng rng(6);
  const auto sk = Skeleton::upper_body();
  const auto base = bone_lengths(synth_pose_frame(0.0, 300.0), *sk);
  for (int i = 0; i < 20; ++i) {
    const auto l = bone_lengths(synth_pose_frame(rng.uniform(), 300.0), *sk);
    for (std::size_t b = 0; b < l.size(); ++b) EXPECT_NEAR(l[b], base[b], 1e-5);
  }
}

// ---- training -------------------------------------------------------------------------------

TEST(Train, ZeroLearningRateChangesNothing) {
  const Dataset d = synth_dataset(1, 6);
  TrainConfig tc;
  tc.lr_g = 0.0f;
  tc.lr_d = 0.0f;
  tc.epochs = 2;
  tc.batch_size = 4;
  const Checkpoint ck = train(d, {}, tc, small_generator(), small_discriminator());
  EXPECT_EQ(ck.generator.params, GeneratorParams::init(small_generator(), tc.seed).params);
  EXPECT_EQ(ck.discriminator.params, DiscriminatorParams::init(small_discriminator(), tc.seed + 1).params);
  ASSERT_EQ(ck.history.size(), 2u);
  EXPECT_NEAR(ck.history[0].g_l1, ck.history[1].g_l1, 1e-6);
  EXPECT_NEAR(ck.history[0].d_loss, ck.history[1].d_loss, 1e-6);
  EXPECT_TRUE(std::isnan(ck.history[0].val_pck));
}

TEST(Train, MicroRunReducesL1) {
  const Dataset d = synth_dataset(2, 20);
  TrainConfig tc;
  tc.lr_g = 0.05f;
  tc.lr_d = 0.01f;
  tc.epochs = 30;
  const double chance = 2.0 * std::numbers::ln2;
  std::vector<EpochMetrics> seen;
  const Checkpoint ck = train(d, {}, tc, small_generator(), small_discriminator(),
                              [&](const EpochMetrics& m) { seen.push_back(m); });
  ASSERT_EQ(seen.size(), 30u);
  ASSERT_EQ(ck.history.size(), 30u);
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i].g_l1, ck.history[i].g_l1);
  EXPECT_LT(seen.back().g_l1, seen.front().g_l1);
  EXPECT_GT(seen.front().d_loss, 0.0);
  EXPECT_LT(seen.front().d_loss, chance + 0.1);
  EXPECT_DOUBLE_EQ(seen.front().gan_objective, -seen.front().d_loss);
  EXPECT_EQ(ck.epoch, 30u);
}

TEST(Train, ResumeContinuesEpochCount) {
  const Dataset d = synth_dataset(3, 4);
  TrainConfig tc;
  tc.epochs = 1;
  Checkpoint ck = train(d, d, tc, small_generator(), small_discriminator());
  ck = train(ck, d, d);
  EXPECT_EQ(ck.epoch, 2u);
  ASSERT_EQ(ck.history.size(), 2u);
  EXPECT_EQ(ck.history[1].epoch, 2u);
  EXPECT_FALSE(std::isnan(ck.history[1].val_pck));
}

TEST(Train, DivergenceNamesTheTerm) {
  const Dataset d = synth_dataset(4, 4);
  TrainConfig tc;
  tc.lr_g = 1e30f;
  tc.epochs = 3;
  try {
    train(d, {}, tc, small_generator(), small_discriminator());
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_FALSE(e.term().empty());
  }
}

TEST(Train, RejectsBadConfig) {
  const Dataset d = synth_dataset(5, 2);
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(train(d, {}, tc, small_generator(), small_discriminator()), InvalidArgument);
  tc = {};
  EXPECT_THROW(train({}, {}, tc, small_generator(), small_discriminator()), InvalidArgument);
  DiscriminatorConfig mismatched = small_discriminator();
  mismatched.motion_frames = 10;
  EXPECT_THROW(train(d, {}, tc, small_generator(), mismatched), ShapeError);
}

TEST(Metrics, JsonLine) {
  EpochMetrics m{3, 1.5, 0.25, 0.125, 0.75, -1.5, std::nan("")};
  EXPECT_EQ(format_metrics_line(m),
            R"({"epoch":3,"d_loss":1.5,"g_l1":0.25,"g_bone":0.125,"g_adv":0.75,"gan_objective":-1.5,"val_pck":null})");
}

// ---- evaluation ------------------------------------------------------------------------------

TEST(Evaluate, TruthAgainstItselfAndZeroModel) {
  const Dataset d = synth_dataset(6, 4);
  Dataset moved = d;
  for (auto& p : moved) {
    for (std::size_t t = 0; t < p.target.frames; ++t) {
      for (std::size_t k = 0; k < p.target.keypoints; ++k) {
        auto v = p.target.at(t, k);
        v[0] += 5.0f + static_cast<float>(t);
        p.target.set(t, k, v);
      }
    }
  }
  EXPECT_DOUBLE_EQ(evaluate_constant(d[0].target, Dataset{d[0]}, 0.2).mean, 100.0);
  const auto zero = GeneratorParams::zeros(small_generator());
  const PckReport r = evaluate(zero, moved, 0.2);
  EXPECT_DOUBLE_EQ(r.mean, 0.0);
  EXPECT_EQ(r.pairs.size(), 4u);
  EXPECT_EQ(r.per_speaker.count("synth"), 1u);
}

TEST(Evaluate, MeanPose) {
  const Dataset d = synth_dataset(7, 3);
  const PoseSequence m = mean_pose(d);
  double expected = 0.0;
  for (const auto& p : d) {
    for (std::size_t t = 0; t < 30; ++t) expected += p.target.frame(t)[15];
  }
  EXPECT_NEAR(m.frame(0)[15], expected / 90.0, 1e-6);
  EXPECT_EQ(m.frame(0)[15], m.frame(29)[15]);
  EXPECT_THROW(mean_pose({}), InvalidArgument);
}

// ---- checkpoints -----------------------------------------------------------------------------

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.generator = GeneratorParams::init(small_generator(), 1);
  ck.discriminator = DiscriminatorParams::init(small_discriminator(), 2);
  ck.config.lr_g = 0.125f;
  ck.config.epochs = 7;
  ck.epoch = 2;
  ck.history = {{1, 1.3, 0.4, 0.01, 0.7, -1.3, 50.0}, {2, 1.2, 0.3, 0.02, 0.7, -1.2, std::nan("")}};
  return ck;
}

CheckpointErrorKind kind_of(const std::vector<std::uint8_t>& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return CheckpointErrorKind::kMalformed;
}

TEST(Checkpoint, RoundTrip) {
  testing::TempDir tmp;
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint(ck, tmp / "c.ckpt");
  const Checkpoint back = load_checkpoint(tmp / "c.ckpt");
  EXPECT_EQ(back.generator.params, ck.generator.params);
  EXPECT_EQ(back.generator.config, ck.generator.config);
  EXPECT_EQ(back.discriminator.params, ck.discriminator.params);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.epoch, 2u);
  ASSERT_EQ(back.history.size(), 2u);
  EXPECT_EQ(back.history[0], ck.history[0]);
  EXPECT_TRUE(std::isnan(back.history[1].val_pck));
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(ck));
}

TEST(Checkpoint, DistinctErrors) {
  const auto bytes = serialize_checkpoint(sample_checkpoint());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(kind_of(bad_magic), CheckpointErrorKind::kBadMagic);
  auto version = bytes;
  version[4] = 9;
  EXPECT_EQ(kind_of(version), CheckpointErrorKind::kVersionMismatch);
  EXPECT_EQ(kind_of(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 3)), CheckpointErrorKind::kTruncated);
  EXPECT_EQ(kind_of(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + bytes.size() / 2)),
            CheckpointErrorKind::kTruncated);
  // The final tensor's float payload sits just before the 4-byte checksum.
  auto flipped = bytes;
  flipped[bytes.size() - 6] ^= 0x10;
  EXPECT_EQ(kind_of(flipped), CheckpointErrorKind::kChecksum);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(kind_of(trailing), CheckpointErrorKind::kMalformed);
  testing::TempDir tmp;
  EXPECT_THROW(load_checkpoint(tmp / "missing"), IoError);
}

}  // namespace
}  // namespace s2g
