#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "s2g/train.hpp"

namespace s2g {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Finger base and phalanx offsets for the left hand, relative to the wrist.
// The right hand mirrors x. Fingers hang down with the palm facing the body.
struct FingerShape {
  double base_x;
  double base_y;
  double base_z;
  double segment;
};

constexpr std::array<FingerShape, 5> kFingers = {{
    {0.015, -0.030, -0.035, 0.025},  // thumb
    {0.000, -0.075, -0.025, 0.028},
    {0.000, -0.080, -0.005, 0.030},
    {0.000, -0.075, 0.015, 0.027},
    {0.000, -0.065, 0.032, 0.022},
}};

struct ArmPose {
  std::array<double, 3> elbow;
  std::array<double, 3> wrist;
};

// Arm swung forward in the sagittal plane. phi is the upper-arm angle from
// straight down, flexion the forearm angle relative to the upper arm.
ArmPose arm_pose(double shoulder_x, double envelope, double lift, double flexion) {
  const double l1 = SynthRig::kUpperArm;
  const double l2 = SynthRig::kForearm;
  const double p = l1 + l2 * std::cos(flexion);
  const double q = l2 * std::sin(flexion);
  const double r = std::hypot(p, q);
  const double delta = std::atan2(q, p);
  const double target = -p + lift * envelope;  // wrist height relative to the shoulder
  const double phi = std::acos(std::clamp(-target / r, -1.0, 1.0)) - delta;

  const double sy = SynthRig::kShoulderHeight;
  ArmPose arm;
  arm.elbow = {shoulder_x, sy - l1 * std::cos(phi), -l1 * std::sin(phi)};
  arm.wrist = {shoulder_x, arm.elbow[1] - l2 * std::cos(phi + flexion), arm.elbow[2] - l2 * std::sin(phi + flexion)};
  return arm;
}

void put(std::vector<float>& frame, std::size_t k, const std::array<double, 3>& v) {
  for (std::size_t i = 0; i < 3; ++i) frame[k * 3 + i] = static_cast<float>(v[i]);
}

void put_hand(std::vector<float>& frame, std::size_t first, const std::array<double, 3>& wrist, double mirror) {
  std::size_t k = first;
  for (const auto& f : kFingers) {
    std::array<double, 3> p = {wrist[0] + mirror * f.base_x, wrist[1] + f.base_y, wrist[2] + f.base_z};
    for (int j = 0; j < 4; ++j) {
      put(frame, k++, p);
      p[1] -= f.segment;
    }
  }
}

}  // namespace

double SynthRig::flexion_for_tone(double tone_hz) noexcept {
  const double u = std::clamp((tone_hz - kToneLow) / (kToneHigh - kToneLow), 0.0, 1.0);
  return kMaxFlexion * u;
}

double SynthParams::envelope(double t) const noexcept {
  const double shape = 0.55 + 0.25 * std::sin(kTwoPi * rate_slow * t + phase_slow) +
                       0.2 * std::sin(kTwoPi * rate_fast * t + phase_fast);
  return amplitude * std::clamp(shape, 0.05, 1.0);
}

SynthParams random_synth_params(Rng& rng) {
  SynthParams p;
  p.tone_hz = rng.uniform(SynthRig::kToneLow, SynthRig::kToneHigh);
  p.amplitude = 1.0;
  p.rate_slow = rng.uniform(0.25, 0.75);
  p.rate_fast = rng.uniform(0.75, 1.5);
  p.phase_slow = rng.uniform(0.0, kTwoPi);
  p.phase_fast = rng.uniform(0.0, kTwoPi);
  p.carrier_phase = rng.uniform(0.0, kTwoPi);
  return p;
}

SynthParams silent_synth_params() {
  SynthParams p;
  p.amplitude = 0.0;
  return p;
}

std::vector<float> synth_pose_frame(double envelope, double tone_hz) {
  const auto skeleton = Skeleton::upper_body();
  std::vector<float> frame(skeleton->keypoint_count() * 3, 0.0f);
  const double flexion = SynthRig::flexion_for_tone(tone_hz);
  const double half = SynthRig::kShoulderHalfWidth;
  put(frame, 0, {0.0, 1.0, 0.0});
  put(frame, 1, {0.0, 1.45, 0.0});
  put(frame, 2, {0.0, 1.65, 0.0});
  put(frame, 3, {-half, SynthRig::kShoulderHeight, 0.0});
  put(frame, 6, {half, SynthRig::kShoulderHeight, 0.0});
  const ArmPose left = arm_pose(-half, envelope, SynthRig::kLeftLift, flexion);
  const ArmPose right = arm_pose(half, envelope, SynthRig::kRightLift, flexion);
  put(frame, 4, left.elbow);
  put(frame, 5, left.wrist);
  put(frame, 7, right.elbow);
  put(frame, 8, right.wrist);
  put_hand(frame, 9, left.wrist, 1.0);
  put_hand(frame, 29, right.wrist, -1.0);
  return frame;
}

SynthClip render_synth_clip(const SynthParams& params, std::uint32_t sample_rate) {
  if (sample_rate == 0) throw InvalidArgument("render_synth_clip: sample rate must be positive");
  SynthClip clip;
  clip.params = params;
  const std::size_t n = chunk_sample_count(sample_rate);
  clip.audio.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double carrier = 0.6 * std::sin(kTwoPi * params.tone_hz * t + params.carrier_phase) +
                           0.2 * std::sin(kTwoPi * 1.5 * params.tone_hz * t);
    clip.audio[i] = static_cast<float>(params.envelope(t) * carrier);
  }
  clip.pose = PoseSequence(kPosesPerChunk, kPoseFps, Skeleton::upper_body());
  for (std::size_t j = 0; j < kPosesPerChunk; ++j) {
    const double e = params.envelope(static_cast<double>(j) / kPoseFps);
    clip.envelope.push_back(e);
    const auto frame = synth_pose_frame(e, params.tone_hz);
    std::copy(frame.begin(), frame.end(), clip.pose.frame(j).begin());
  }
  return clip;
}

SynthCorpus synth_corpus(std::uint64_t seed, std::size_t n_pairs) {
  if (n_pairs == 0) throw InvalidArgument("synth_corpus: need at least one pair");
  Rng rng(seed);
  SynthCorpus corpus;
  corpus.audio.sample_rate = kDefaultSampleRate;
  corpus.poses.names = Skeleton::upper_body()->names();
  corpus.poses.fps = kPoseFps;
  for (std::size_t c = 0; c < n_pairs; ++c) {
    const SynthClip clip = render_synth_clip(random_synth_params(rng));
    corpus.audio.samples.insert(corpus.audio.samples.end(), clip.audio.begin(), clip.audio.end());
    for (std::size_t j = 0; j < clip.pose.frames; ++j) {
      const auto f = clip.pose.frame(j);
      corpus.poses.frames.emplace_back(std::vector<float>(f.begin(), f.end()));
    }
  }
  return corpus;
}

Dataset synth_dataset(std::uint64_t seed, std::size_t n_pairs, const MelConfig& mel) {
  const SynthCorpus corpus = synth_corpus(seed, n_pairs);
  const MelExtractor extractor(mel);
  return build_dataset(corpus.audio, corpus.poses, Skeleton::upper_body(), extractor, "synth",
                       fmt::format("synth-{}", seed));
}

}  // namespace s2g
