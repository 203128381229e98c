#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "s2g/train.hpp"

namespace s2g {

namespace {

struct PreparedPair {
  Tensor input;
  Tensor target;
  Tensor real_motion;
};

Tensor pose_values(const PoseSequence& seq) { return Tensor({seq.frames, seq.keypoints * 3}, seq.coords); }

std::vector<PreparedPair> prepare(const Dataset& data, const GeneratorConfig& gc, const DiscriminatorConfig& dc) {
  std::vector<PreparedPair> out;
  out.reserve(data.size());
  for (const auto& p : data) {
    if (p.target.frames != gc.out_frames || p.target.keypoints != gc.keypoints) {
      throw ShapeError(fmt::format("training target {}:{} is {}x{}, generator predicts {}x{}", p.source, p.index,
                                   p.target.frames, p.target.keypoints, gc.out_frames, gc.keypoints));
    }
    if (dc.motion_frames + 1 != gc.out_frames || dc.keypoints != gc.keypoints) {
      throw ShapeError("discriminator and generator configs disagree on sequence shape");
    }
    const MotionSequence m = motion(p.target);
    out.push_back({prepare_features(p.features, gc), pose_values(p.target),
                   Tensor({m.frames, m.keypoints * 3}, m.deltas)});
  }
  return out;
}

void accumulate(std::vector<Tensor>& sum, const Gradients& grads, const std::vector<Var>& vars, float weight) {
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const Tensor& g = grads.of(vars[i]);
    for (std::size_t j = 0; j < g.size(); ++j) sum[i][j] += weight * g[j];
  }
}

std::vector<Tensor> zeros_like(const ParamSet& params) {
  std::vector<Tensor> out;
  for (const auto& t : params.tensors()) out.emplace_back(t.shape(), 0.0f);
  return out;
}

void check_finite(double value, const char* term, std::size_t epoch) {
  if (!std::isfinite(value)) {
    throw TrainingDiverged(term, fmt::format("training diverged in epoch {}: {} is {}", epoch, term, value));
  }
}

std::string json_number(double v) { return std::isfinite(v) ? fmt::format("{:.9g}", v) : std::string("null"); }

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(lr_g >= 0.0f) || !(lr_d >= 0.0f)) throw InvalidArgument("learning rates must be non-negative");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw InvalidArgument("momentum must be in [0, 1)");
  if (!(lambda_bone >= 0.0f)) throw InvalidArgument("lambda_bone must be non-negative");
  if (!(adv_weight >= 0.0f)) throw InvalidArgument("adv_weight must be non-negative");
  if (!(pck_alpha > 0.0)) throw InvalidArgument("pck_alpha must be positive");
}

std::string format_metrics_line(const EpochMetrics& m) {
  return fmt::format(
      "{{\"epoch\":{},\"d_loss\":{},\"g_l1\":{},\"g_bone\":{},\"g_adv\":{},\"gan_objective\":{},\"val_pck\":{}}}", m.epoch,
      json_number(m.d_loss), json_number(m.g_l1), json_number(m.g_bone), json_number(m.g_adv),
      json_number(m.gan_objective), json_number(m.val_pck));
}

Checkpoint train(const Dataset& train_set, const Dataset& validation, const TrainConfig& config,
                 const GeneratorConfig& generator_config, const DiscriminatorConfig& discriminator_config,
                 const EpochCallback& on_epoch) {
  config.validate();
  generator_config.validate();
  discriminator_config.validate();
  Checkpoint start;
  start.generator = GeneratorParams::init(generator_config, config.seed);
  start.discriminator = DiscriminatorParams::init(discriminator_config, config.seed + 1);
  start.config = config;
  return train(std::move(start), train_set, validation, on_epoch);
}

Checkpoint train(Checkpoint state, const Dataset& train_set, const Dataset& validation,
                 const EpochCallback& on_epoch) {
  const TrainConfig& cfg = state.config;
  cfg.validate();
  if (train_set.empty()) throw InvalidArgument("training set is empty");
  const GeneratorConfig& gc = state.generator.config;
  const DiscriminatorConfig& dc = state.discriminator.config;
  const std::vector<PreparedPair> pairs = prepare(train_set, gc, dc);
  const auto skeleton = train_set.front().target.skeleton;
  if (!skeleton) throw InvalidArgument("training targets need a skeleton");
  const auto bones = bone_pairs(*skeleton);

  MomentumSgd opt_g(cfg.lr_g, cfg.momentum);
  MomentumSgd opt_d(cfg.lr_d, cfg.momentum);
  std::vector<std::size_t> order(pairs.size());

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const std::size_t epoch = state.epoch + 1;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + epoch);
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng.index(i + 1)]);

    double sum_d = 0.0, sum_l1 = 0.0, sum_bone = 0.0, sum_adv = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const float weight = 1.0f / static_cast<float>(end - begin);

      // Generator forward for the whole batch; graphs are reused for its update.
      struct Item {
        Graph g;
        std::vector<Var> gp;
        Var pred;
        Var fake_motion;
      };
      std::vector<Item> items;
      items.reserve(end - begin);
      for (std::size_t b = begin; b < end; ++b) {
        Item it;
        const Var input = it.g.constant(pairs[order[b]].input);
        it.gp = state.generator.params.bind(it.g);
        it.pred = generator_graph(it.g, input, gc, it.gp);
        it.fake_motion = time_diff(it.g, it.pred);
        items.push_back(std::move(it));
      }

      // Discriminator step against detached fakes.
      std::vector<Tensor> d_grad = zeros_like(state.discriminator.params);
      double batch_d = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        const Item& it = items[b - begin];
        Graph dg;
        const Var real = dg.constant(pairs[order[b]].real_motion);
        const Var fake = dg.constant(it.g.value(it.fake_motion));
        const auto dp = state.discriminator.params.bind(dg);
        const auto gan = gan_loss_graph(dg, real, fake, dc, dp);
        batch_d += dg.value(gan.d_loss).item();
        accumulate(d_grad, dg.backward(gan.d_loss), dp, weight);
      }
      check_finite(batch_d, "d_loss", epoch);
      opt_d.step(state.discriminator.params, d_grad);

      // Generator step through the updated discriminator.
      std::vector<Tensor> g_grad = zeros_like(state.generator.params);
      double batch_l1 = 0.0, batch_bone = 0.0, batch_adv = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        Item& it = items[b - begin];
        const Var target = it.g.constant(pairs[order[b]].target);
        const Var real = it.g.constant(pairs[order[b]].real_motion);
        const auto dp = state.discriminator.params.bind(it.g);
        const auto rec = generator_loss_graph(it.g, it.pred, target, bones, cfg.lambda_bone);
        const auto gan = gan_loss_graph(it.g, real, it.fake_motion, dc, dp);
        const Var total = add(it.g, rec.total, scale(it.g, gan.g_adv, cfg.adv_weight));
        batch_l1 += it.g.value(rec.l1).item();
        batch_bone += it.g.value(rec.bone).item();
        batch_adv += it.g.value(gan.g_adv).item();
        accumulate(g_grad, it.g.backward(total), it.gp, weight);
      }
      check_finite(batch_l1, "g_l1", epoch);
      check_finite(batch_bone, "g_bone", epoch);
      check_finite(batch_adv, "g_adv", epoch);
      opt_g.step(state.generator.params, g_grad);

      sum_d += batch_d;
      sum_l1 += batch_l1;
      sum_bone += batch_bone;
      sum_adv += batch_adv;
    }
    for (const auto& t : state.generator.params.tensors()) {
      if (!t.all_finite()) check_finite(std::numeric_limits<double>::quiet_NaN(), "generator parameters", epoch);
    }
    for (const auto& t : state.discriminator.params.tensors()) {
      if (!t.all_finite()) check_finite(std::numeric_limits<double>::quiet_NaN(), "discriminator parameters", epoch);
    }

    const auto n = static_cast<double>(pairs.size());
    EpochMetrics m;
    m.epoch = epoch;
    m.d_loss = sum_d / n;
    m.g_l1 = sum_l1 / n;
    m.g_bone = sum_bone / n;
    m.g_adv = sum_adv / n;
    m.gan_objective = -m.d_loss;
    m.val_pck = validation.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : evaluate(state.generator, validation, cfg.pck_alpha).mean;
    state.epoch = epoch;
    state.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return state;
}

namespace {

PckReport summarize(std::vector<PairScore> scores, double alpha) {
  PckReport report;
  report.alpha = alpha;
  std::map<std::string, std::pair<double, std::size_t>> speakers;
  double total = 0.0;
  for (const auto& s : scores) {
    total += s.pck;
    auto& acc = speakers[s.speaker];
    acc.first += s.pck;
    ++acc.second;
  }
  report.mean = total / static_cast<double>(scores.size());
  for (const auto& [name, acc] : speakers) report.per_speaker[name] = acc.first / static_cast<double>(acc.second);
  report.pairs = std::move(scores);
  return report;
}

}  // namespace

PckReport evaluate(const GeneratorParams& generator, const Dataset& data, double alpha) {
  if (data.empty()) throw InvalidArgument("evaluate: dataset is empty");
  std::vector<PairScore> scores;
  for (const auto& p : data) {
    const PoseSequence pred = generator_forward(p.features, generator, p.target.skeleton, p.target.fps);
    scores.push_back({p.speaker, p.source, p.index, pck(pred, p.target, alpha)});
  }
  return summarize(std::move(scores), alpha);
}

PckReport evaluate(const Checkpoint& checkpoint, const Dataset& data, double alpha) {
  return evaluate(checkpoint.generator, data, alpha);
}

PckReport evaluate_constant(const PoseSequence& prediction, const Dataset& data, double alpha) {
  if (data.empty()) throw InvalidArgument("evaluate: dataset is empty");
  std::vector<PairScore> scores;
  for (const auto& p : data) scores.push_back({p.speaker, p.source, p.index, pck(prediction, p.target, alpha)});
  return summarize(std::move(scores), alpha);
}

PoseSequence mean_pose(const Dataset& data) {
  if (data.empty()) throw InvalidArgument("mean_pose: dataset is empty");
  const PoseSequence& first = data.front().target;
  const std::size_t width = first.keypoints * 3;
  std::vector<double> sum(width, 0.0);
  std::size_t count = 0;
  for (const auto& p : data) {
    if (p.target.keypoints != first.keypoints) throw ShapeError("mean_pose: keypoint count differs between pairs");
    for (std::size_t t = 0; t < p.target.frames; ++t) {
      const auto f = p.target.frame(t);
      for (std::size_t i = 0; i < width; ++i) sum[i] += f[i];
    }
    count += p.target.frames;
  }
  PoseSequence out(first.frames, first.keypoints, first.fps, first.skeleton);
  for (std::size_t t = 0; t < out.frames; ++t) {
    auto f = out.frame(t);
    for (std::size_t i = 0; i < width; ++i) f[i] = static_cast<float>(sum[i] / static_cast<double>(count));
  }
  return out;
}

}  // namespace s2g
