#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "s2g/audio.hpp"
#include "s2g/error.hpp"
#include "s2g/model.hpp"
#include "s2g/pose.hpp"
#include "s2g/random.hpp"

namespace s2g {

// One aligned 2 s example: speech features and the normalized target poses.
struct TrainingPair {
  FeatureSequence features;
  PoseSequence target;
  std::string speaker;
  std::string source;
  std::size_t index = 0;  // chunk position within the source
};

using Dataset = std::vector<TrainingPair>;

// ---- dataset ingestion -------------------------------------------------------

struct SourceFiles {
  std::filesystem::path audio;
  std::filesystem::path poses;
  std::string speaker = "speaker";
  std::string source;
};

// Aligns audio and pose data into non-overlapping 2 s pairs. Poses are
// resampled to 15 fps by linear interpolation; chunks touching a gap in the
// pose track are dropped.
Dataset build_dataset(const WavData& audio, const PoseTrack& poses, std::shared_ptr<const Skeleton> skeleton,
                      const MelExtractor& mel, const std::string& speaker, const std::string& source);
Dataset build_dataset(const std::vector<SourceFiles>& sources, std::shared_ptr<const Skeleton> skeleton,
                      const MelConfig& mel = {});

struct DatasetSplit {
  Dataset train;
  Dataset validation;
};

// Holds out the last tenth of every source (at least one pair when a source
// has two or more), preserving temporal order.
DatasetSplit split_validation(const Dataset& data, double fraction = 0.1);

// ---- synthetic corpus ----------------------------------------------------------
//
// Audio is a pair of amplitude-modulated tones. The wrists rise with the
// amplitude envelope and the elbows flex with the dominant tone frequency;
// hands are rigid offsets from the wrists, so bone lengths never change.
struct SynthRig {
  static constexpr float kUpperArm = 0.30f;
  static constexpr float kForearm = 0.27f;
  static constexpr float kShoulderHalfWidth = 0.20f;
  static constexpr float kShoulderHeight = 1.42f;
  static constexpr float kLeftLift = 0.35f;   // wrist rise at full envelope, metres
  static constexpr float kRightLift = 0.25f;
  static constexpr double kToneLow = 220.0;
  static constexpr double kToneHigh = 880.0;
  static constexpr double kMaxFlexion = 1.5707963267948966;  // radians at kToneHigh

  static double flexion_for_tone(double tone_hz) noexcept;
};

struct SynthParams {
  double tone_hz = SynthRig::kToneLow;
  double amplitude = 1.0;
  double rate_slow = 0.5;  // Hz
  double rate_fast = 1.0;  // Hz
  double phase_slow = 0.0;
  double phase_fast = 0.0;
  double carrier_phase = 0.0;

  double envelope(double t) const noexcept;
};

SynthParams random_synth_params(Rng& rng);
SynthParams silent_synth_params();

struct SynthClip {
  SynthParams params;
  std::vector<float> audio;      // 2 s at the requested rate
  PoseSequence pose;             // 30 frames, world coordinates
  std::vector<double> envelope;  // envelope at each pose frame
};

SynthClip render_synth_clip(const SynthParams& params, std::uint32_t sample_rate = kDefaultSampleRate);
// Raw world-space pose for the given envelope value and tone.
std::vector<float> synth_pose_frame(double envelope, double tone_hz);

struct SynthCorpus {
  WavData audio;
  PoseTrack poses;
};

SynthCorpus synth_corpus(std::uint64_t seed, std::size_t n_pairs);
Dataset synth_dataset(std::uint64_t seed, std::size_t n_pairs, const MelConfig& mel = {});

// ---- training ------------------------------------------------------------------

struct TrainConfig {
  float lambda_bone = 0.5f;
  float lr_g = 1e-4f;
  float lr_d = 4e-4f;
  float momentum = 0.9f;
  float adv_weight = 1.0f;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double pck_alpha = 0.2;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double d_loss = 0.0;
  double g_l1 = 0.0;
  double g_bone = 0.0;
  double g_adv = 0.0;
  double gan_objective = 0.0;  // log D(real) + log(1 - D(fake)), averaged
  double val_pck = 0.0;    // NaN when there is no validation data

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

std::string format_metrics_line(const EpochMetrics& m);

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  GeneratorParams generator;
  DiscriminatorParams discriminator;
  TrainConfig config;
  std::size_t epoch = 0;
  std::vector<EpochMetrics> history;
  std::uint32_t format_version = kFormatVersion;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::string term, const std::string& what) : Error(what), term_(std::move(term)) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Alternates one discriminator step and one generator step per batch.
Checkpoint train(const Dataset& train_set, const Dataset& validation, const TrainConfig& config,
                 const GeneratorConfig& generator_config, const DiscriminatorConfig& discriminator_config,
                 const EpochCallback& on_epoch = {});

// Continues training from an existing checkpoint for config.epochs more epochs.
Checkpoint train(Checkpoint start, const Dataset& train_set, const Dataset& validation,
                 const EpochCallback& on_epoch = {});

// ---- evaluation ----------------------------------------------------------------

struct PairScore {
  std::string speaker;
  std::string source;
  std::size_t index = 0;
  double pck = 0.0;
};

struct PckReport {
  double alpha = 0.2;
  double mean = 0.0;
  std::vector<PairScore> pairs;
  std::map<std::string, double> per_speaker;
};

PckReport evaluate(const GeneratorParams& generator, const Dataset& data, double alpha);
PckReport evaluate(const Checkpoint& checkpoint, const Dataset& data, double alpha);
// Scores a fixed pose sequence against every pair (e.g. the mean-pose baseline).
PckReport evaluate_constant(const PoseSequence& prediction, const Dataset& data, double alpha);
PoseSequence mean_pose(const Dataset& data);

// ---- checkpoints ---------------------------------------------------------------

enum class CheckpointErrorKind { kBadMagic, kVersionMismatch, kTruncated, kChecksum, kMalformed };

class CheckpointError : public IoError {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// "G2P1" | u32 version | u32 meta length | meta (JSON) | u32 tensor count |
// per tensor: u32 name length, name, u32 rank, u32 dims..., f32 values |
// u32 CRC-32 of everything before it. All integers little-endian.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace s2g
