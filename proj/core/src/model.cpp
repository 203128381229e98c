#include "s2g/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "s2g/error.hpp"
#include "s2g/random.hpp"

namespace s2g {

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

std::vector<ParamSpec> generator_layout(const GeneratorConfig& c) {
  std::vector<ParamSpec> specs;
  auto conv = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t width) {
    specs.push_back({name + ".weight", {out, in, width}, in * width});
    specs.push_back({name + ".bias", {out}, in * width});
  };
  const std::size_t depth = c.widths.size();
  std::size_t in = c.bands;
  for (std::size_t i = 0; i < depth; ++i) {
    conv(fmt::format("enc{}", i), c.widths[i], in, c.kernel);
    in = c.widths[i];
  }
  for (std::size_t j = 0; j < c.bottleneck_convs; ++j) conv(fmt::format("bottleneck{}", j), in, in, c.kernel);
  for (std::size_t i = depth; i-- > 0;) {
    const std::size_t out = i > 0 ? c.widths[i - 1] : c.widths[0];
    conv(fmt::format("dec{}", i), out, in + c.widths[i], c.kernel);
    in = out;
  }
  conv("head", c.keypoints * 3, in, 1);
  return specs;
}

std::vector<ParamSpec> discriminator_layout(const DiscriminatorConfig& c) {
  std::vector<ParamSpec> specs;
  std::size_t in = c.keypoints * 3;
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    specs.push_back({fmt::format("conv{}.weight", i), {c.widths[i], in, c.kernel}, in * c.kernel});
    specs.push_back({fmt::format("conv{}.bias", i), {c.widths[i]}, in * c.kernel});
    in = c.widths[i];
  }
  specs.push_back({"head.weight", {1, in}, in});
  specs.push_back({"head.bias", {1}, in});
  return specs;
}

ParamSet materialize(const std::vector<ParamSpec>& specs, Rng* rng) {
  ParamSet set;
  for (const auto& s : specs) {
    Tensor t(s.shape, 0.0f);
    if (rng != nullptr) {
      const double bound = std::sqrt(1.0 / static_cast<double>(s.fan_in));
      for (auto& v : t.data()) v = static_cast<float>(rng->uniform(-bound, bound));
    }
    set.add(s.name, std::move(t));
  }
  return set;
}

void check_params(std::span<const Var> params, std::size_t expected, const char* what) {
  if (params.size() != expected) {
    throw ShapeError(fmt::format("{}: expected {} parameter tensors, got {}", what, expected, params.size()));
  }
}

Var conv_block(Graph& g, Var x, std::span<const Var> params, std::size_t& cursor, std::size_t stride,
               std::size_t kernel, float slope) {
  Var y = conv1d(g, x, params[cursor], stride, kernel / 2);
  y = channel_bias(g, y, params[cursor + 1]);
  cursor += 2;
  return leaky_relu(g, y, slope);
}

}  // namespace

void GeneratorConfig::validate() const {
  if (bands == 0 || feature_frames == 0) throw InvalidArgument("generator: feature shape must be positive");
  if (widths.empty()) throw InvalidArgument("generator: need at least one encoder stage");
  for (auto w : widths) {
    if (w == 0) throw InvalidArgument("generator: channel widths must be positive");
  }
  if (kernel == 0 || kernel % 2 == 0) throw InvalidArgument("generator: kernel width must be odd");
  if (out_frames < 2) throw InvalidArgument("generator: need at least two output frames");
  if (keypoints < 2) throw InvalidArgument("generator: need at least two keypoints");
  if (!(feature_scale > 0.0f)) throw InvalidArgument("generator: feature scale must be positive");
}

void DiscriminatorConfig::validate() const {
  if (keypoints < 2 || motion_frames < 1) throw InvalidArgument("discriminator: motion shape must be positive");
  if (widths.empty()) throw InvalidArgument("discriminator: need at least one conv layer");
  for (auto w : widths) {
    if (w == 0) throw InvalidArgument("discriminator: channel widths must be positive");
  }
  if (kernel == 0 || kernel % 2 == 0) throw InvalidArgument("discriminator: kernel width must be odd");
}

void ParamSet::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

std::size_t ParamSet::value_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::vector<Var> ParamSet::bind(Graph& g) const {
  std::vector<Var> vars;
  vars.reserve(tensors_.size());
  for (const auto& t : tensors_) vars.push_back(g.parameter(t));
  return vars;
}

GeneratorParams GeneratorParams::init(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  return {config, materialize(generator_layout(config), &rng)};
}

GeneratorParams GeneratorParams::zeros(const GeneratorConfig& config) {
  config.validate();
  return {config, materialize(generator_layout(config), nullptr)};
}

DiscriminatorParams DiscriminatorParams::init(const DiscriminatorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  return {config, materialize(discriminator_layout(config), &rng)};
}

DiscriminatorParams DiscriminatorParams::zeros(const DiscriminatorConfig& config) {
  config.validate();
  return {config, materialize(discriminator_layout(config), nullptr)};
}

std::shared_ptr<const BonePairs> bone_pairs(const Skeleton& skeleton) {
  auto pairs = std::make_shared<BonePairs>();
  for (const auto& b : skeleton.bones()) pairs->emplace_back(b.parent, b.child);
  return pairs;
}

Tensor prepare_features(const FeatureSequence& features, const GeneratorConfig& config) {
  const Tensor& v = features.values;
  if (v.rank() != 2 || v.dim(0) != config.feature_frames || v.dim(1) != config.bands) {
    throw ShapeError(fmt::format("generator expects {}x{} features, got {}", config.feature_frames, config.bands,
                                 shape_string(v.shape())));
  }
  const std::size_t frames = v.dim(0), bands = v.dim(1);
  Tensor out({bands, frames}, 0.0f);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t b = 0; b < bands; ++b) {
      out[b * frames + f] = (v[f * bands + b] + config.feature_offset) * config.feature_scale;
    }
  }
  return out;
}

Var generator_graph(Graph& g, Var input, const GeneratorConfig& c, std::span<const Var> params) {
  check_params(params, generator_layout(c).size(), "generator");
  const Tensor& x = g.value(input);
  if (x.rank() != 2 || x.dim(0) != c.bands || x.dim(1) != c.feature_frames) {
    throw ShapeError(fmt::format("generator expects input {}x{}, got {}", c.bands, c.feature_frames,
                                 shape_string(x.shape())));
  }
  std::size_t cursor = 0;
  std::vector<Var> skips;
  Var h = input;
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    h = conv_block(g, h, params, cursor, 2, c.kernel, c.slope);
    skips.push_back(h);
  }
  for (std::size_t j = 0; j < c.bottleneck_convs; ++j) h = conv_block(g, h, params, cursor, 1, c.kernel, c.slope);
  for (std::size_t i = c.widths.size(); i-- > 0;) {
    const std::size_t skip_len = g.value(skips[i]).dim(1);
    if (g.value(h).dim(1) != skip_len) h = resample_time(g, h, skip_len);
    h = concat_channels(g, h, skips[i]);
    h = conv_block(g, h, params, cursor, 1, c.kernel, c.slope);
  }
  h = resample_time(g, h, c.out_frames);
  h = conv1d(g, h, params[cursor], 1, 0);
  h = channel_bias(g, h, params[cursor + 1]);
  return transpose(g, h);
}

Var discriminator_graph(Graph& g, Var motion, const DiscriminatorConfig& c, std::span<const Var> params) {
  check_params(params, discriminator_layout(c).size(), "discriminator");
  const Tensor& m = g.value(motion);
  if (m.rank() != 2 || m.dim(0) != c.motion_frames || m.dim(1) != c.keypoints * 3) {
    throw ShapeError(fmt::format("discriminator expects motion {}x{}, got {}", c.motion_frames, c.keypoints * 3,
                                 shape_string(m.shape())));
  }
  std::size_t cursor = 0;
  Var h = transpose(g, motion);
  for (std::size_t i = 0; i < c.widths.size(); ++i) h = conv_block(g, h, params, cursor, i == 0 ? 1 : 2, c.kernel, c.slope);
  h = mean_time(g, h);
  return affine(g, h, params[cursor], params[cursor + 1]);
}

GeneratorLossVars generator_loss_graph(Graph& g, Var pred, Var target, std::shared_ptr<const BonePairs> bones,
                                       float lambda_bone) {
  const Var l1 = l1_loss(g, pred, target);
  const Var lengths = bone_lengths(g, pred, std::move(bones));
  const Var bone = mean_abs(g, time_diff(g, lengths));
  const Var total = add(g, l1, scale(g, bone, lambda_bone));
  return {total, l1, bone};
}

GanLossVars gan_loss_graph(Graph& g, Var real_motion, Var fake_motion, const DiscriminatorConfig& config,
                           std::span<const Var> d_params) {
  const Var real_logit = discriminator_graph(g, real_motion, config, d_params);
  const Var fake_logit = discriminator_graph(g, fake_motion, config, d_params);
  const Var d_loss = add(g, bce_with_logits(g, real_logit, 1.0f), bce_with_logits(g, fake_logit, 0.0f));
  const Var g_adv = bce_with_logits(g, fake_logit, 1.0f);
  return {d_loss, g_adv, real_logit, fake_logit};
}

// ---- value-level API -----------------------------------------------------------

namespace {

Tensor pose_tensor(const PoseSequence& seq) {
  return Tensor({seq.frames, seq.keypoints * 3}, seq.coords);
}

Tensor motion_tensor(const MotionSequence& m) {
  if (m.frames == 0) throw ShapeError("motion sequence is empty");
  return Tensor({m.frames, m.keypoints * 3}, m.deltas);
}

}  // namespace

PoseSequence generator_forward(const FeatureSequence& features, const GeneratorParams& params,
                               std::shared_ptr<const Skeleton> skeleton, double fps) {
  const auto& c = params.config;
  if (skeleton && skeleton->keypoint_count() != c.keypoints) {
    throw ShapeError(fmt::format("generator predicts {} keypoints, skeleton has {}", c.keypoints,
                                 skeleton->keypoint_count()));
  }
  Graph g;
  const Var input = g.constant(prepare_features(features, c));
  const auto vars = params.params.bind(g);
  const Var out = generator_graph(g, input, c, vars);
  PoseSequence seq(c.out_frames, c.keypoints, fps, std::move(skeleton));
  seq.coords = g.value(out).values();
  return seq;
}

GeneratorLoss generator_loss(const PoseSequence& pred, const PoseSequence& gt, float lambda_bone) {
  if (pred.frames != gt.frames || pred.keypoints != gt.keypoints || pred.coords.size() != gt.coords.size()) {
    throw ShapeError(fmt::format("generator_loss shape mismatch: {}x{} vs {}x{}", pred.frames, pred.keypoints,
                                 gt.frames, gt.keypoints));
  }
  if (pred.frames < 2) throw InvalidArgument("generator_loss needs at least two frames");
  const auto& skeleton = pred.skeleton ? pred.skeleton : gt.skeleton;
  if (!skeleton) throw InvalidArgument("generator_loss needs a skeleton for bone lengths");
  Graph g;
  const Var p = g.constant(pose_tensor(pred));
  const Var t = g.constant(pose_tensor(gt));
  const auto vars = generator_loss_graph(g, p, t, bone_pairs(*skeleton), lambda_bone);
  return {g.value(vars.total).item(), g.value(vars.l1).item(), g.value(vars.bone).item()};
}

float discriminator_forward(const MotionSequence& deltas, const DiscriminatorParams& params) {
  Graph g;
  const Var m = g.constant(motion_tensor(deltas));
  const auto vars = params.params.bind(g);
  return g.value(discriminator_graph(g, m, params.config, vars)).item();
}

GanLosses gan_losses(const MotionSequence& real, const MotionSequence& fake, const DiscriminatorParams& params) {
  Graph g;
  const Var r = g.constant(motion_tensor(real));
  const Var f = g.constant(motion_tensor(fake));
  const auto vars = params.params.bind(g);
  const auto losses = gan_loss_graph(g, r, f, params.config, vars);
  const float d_loss = g.value(losses.d_loss).item();
  return {d_loss, g.value(losses.g_adv).item(), -d_loss};
}

void MomentumSgd::step(ParamSet& params, std::span<const Tensor> grads) {
  if (grads.size() != params.size()) {
    throw ShapeError(fmt::format("optimizer: {} gradients for {} parameters", grads.size(), params.size()));
  }
  if (velocity_.empty()) {
    for (const auto& t : params.tensors()) velocity_.emplace_back(t.shape(), 0.0f);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    Tensor& v = velocity_[i];
    const Tensor& gr = grads[i];
    if (gr.shape() != p.shape()) throw ShapeError(fmt::format("optimizer: gradient shape mismatch for {}", params.name(i)));
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum_ * v[j] + gr[j];
      p[j] -= lr_ * v[j];
    }
  }
}

}  // namespace s2g
