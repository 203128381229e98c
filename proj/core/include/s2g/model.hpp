#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "s2g/audio.hpp"
#include "s2g/autodiff.hpp"
#include "s2g/pose.hpp"
#include "s2g/tensor.hpp"

namespace s2g {

// UNet over the time axis: strided encoder convs, bottleneck convs at the
// lowest resolution, then decoder stages that upsample and concatenate the
// matching encoder output. The head resamples to out_frames and projects
// every frame to keypoints * 3 coordinates.
struct GeneratorConfig {
  std::size_t bands = 64;
  std::size_t feature_frames = 198;
  std::vector<std::size_t> widths = {64, 128, 256, 512};
  std::size_t kernel = 3;
  std::size_t bottleneck_convs = 1;
  float slope = 0.2f;
  std::size_t out_frames = 30;
  std::size_t keypoints = 49;
  // Input features are mapped to (x + feature_offset) * feature_scale.
  float feature_offset = 8.0f;
  float feature_scale = 0.125f;

  void validate() const;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

// Scores a whole motion sequence: conv stack over time with the K*3
// coordinates as channels, mean pooling, and a single-logit affine head.
struct DiscriminatorConfig {
  std::size_t keypoints = 49;
  std::size_t motion_frames = 29;
  std::vector<std::size_t> widths = {64, 128};
  std::size_t kernel = 3;
  float slope = 0.2f;

  void validate() const;
  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

// Named learnable tensors in a fixed order.
class ParamSet {
 public:
  void add(std::string name, Tensor value);
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t value_count() const noexcept;
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::vector<Tensor>& tensors() noexcept { return tensors_; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  // Registers every tensor as a graph parameter, in order.
  std::vector<Var> bind(Graph& g) const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

struct GeneratorParams {
  GeneratorConfig config;
  ParamSet params;

  // Weights and biases uniform in +-sqrt(1 / fan_in).
  static GeneratorParams init(const GeneratorConfig& config, std::uint64_t seed);
  static GeneratorParams zeros(const GeneratorConfig& config);
};

struct DiscriminatorParams {
  DiscriminatorConfig config;
  ParamSet params;

  static DiscriminatorParams init(const DiscriminatorConfig& config, std::uint64_t seed);
  static DiscriminatorParams zeros(const DiscriminatorConfig& config);
};

std::shared_ptr<const BonePairs> bone_pairs(const Skeleton& skeleton);

// ---- graph builders ----------------------------------------------------------

// [F x M] features -> normalized, channel-major [M x F] generator input.
Tensor prepare_features(const FeatureSequence& features, const GeneratorConfig& config);

// input [M x F] -> pose [out_frames x 3K].
Var generator_graph(Graph& g, Var input, const GeneratorConfig& config, std::span<const Var> params);
// motion [(T-1) x 3K] -> logit [1].
Var discriminator_graph(Graph& g, Var motion, const DiscriminatorConfig& config, std::span<const Var> params);

struct GeneratorLossVars {
  Var total;
  Var l1;
  Var bone;
};

// Mean L1 pose error plus lambda_bone times the mean absolute change of the
// prediction's bone lengths between consecutive frames.
GeneratorLossVars generator_loss_graph(Graph& g, Var pred, Var target, std::shared_ptr<const BonePairs> bones,
                                       float lambda_bone);

struct GanLossVars {
  Var d_loss;  // bce(D(real), 1) + bce(D(fake), 0)
  Var g_adv;   // bce(D(fake), 1)
  Var real_logit;
  Var fake_logit;
};

GanLossVars gan_loss_graph(Graph& g, Var real_motion, Var fake_motion, const DiscriminatorConfig& config,
                           std::span<const Var> d_params);

// ---- value-level API -----------------------------------------------------------

PoseSequence generator_forward(const FeatureSequence& features, const GeneratorParams& params,
                               std::shared_ptr<const Skeleton> skeleton, double fps = 15.0);

struct GeneratorLoss {
  float total = 0.0f;
  float l1 = 0.0f;
  float bone = 0.0f;
};

GeneratorLoss generator_loss(const PoseSequence& pred, const PoseSequence& gt, float lambda_bone);

float discriminator_forward(const MotionSequence& deltas, const DiscriminatorParams& params);

struct GanLosses {
  float d_loss = 0.0f;
  float g_adv = 0.0f;
  // log D(real) + log(1 - D(fake)), the quantity the discriminator maximizes.
  float objective = 0.0f;
};

GanLosses gan_losses(const MotionSequence& real, const MotionSequence& fake, const DiscriminatorParams& params);

// Gradient descent with momentum: v = mu * v + g; p -= lr * v.
class MomentumSgd {
 public:
  MomentumSgd(float learning_rate, float momentum) : lr_(learning_rate), momentum_(momentum) {}
  void step(ParamSet& params, std::span<const Tensor> grads);
  const std::vector<Tensor>& velocity() const noexcept { return velocity_; }
  void set_velocity(std::vector<Tensor> v) { velocity_ = std::move(v); }

 private:
  float lr_;
  float momentum_;
  std::vector<Tensor> velocity_;
};

}  // namespace s2g
