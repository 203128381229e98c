#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include <gtest/gtest.h>

#include "s2g/autodiff.hpp"
#include "s2g/error.hpp"
#include "s2g/random.hpp"
#include "support/oracle.hpp"

namespace s2g {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// Builds op(inputs) and reduces it to a scalar with a fixed random linear
// functional, so every output element contributes a distinct weight.
using OpBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

Var project(Graph& g, Var y, const Tensor& weights) {
  const Var flat = reshape(g, y, {weights.size()});
  return affine(g, flat, g.constant(weights.reshaped({1, weights.size()})), g.constant(Tensor({1}, 0.0f)));
}

// Central differences in float at h = 1e-3, compared norm-wise per input.
// Elements whose +-h interval straddles a kink (one-sided slopes disagree)
// are left out; returns how many were.
std::size_t expect_gradients_match(const OpBuilder& op, std::vector<Tensor> inputs, std::uint64_t seed = 3) {
  // The op runs in float; the projection to a scalar is summed in double so
  // the test's own reduction adds no roundoff.
  auto evaluate = [&](const std::vector<Tensor>& xs, Gradients* grads, std::vector<Var>* vars) {
    Graph g;
    std::vector<Var> v;
    for (const auto& x : xs) v.push_back(g.parameter(x));
    const Var y = op(g, v);
    const Tensor out = g.value(y);
    Rng rng(seed);
    const Tensor w = random_tensor({out.size()}, rng);
    if (grads != nullptr) *grads = g.backward(project(g, y, w));
    if (vars != nullptr) *vars = v;
    double total = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) total += static_cast<double>(w[k]) * out[k];
    return total;
  };
  Gradients grads({}, {});
  std::vector<Var> vars;
  const double centre = evaluate(inputs, &grads, &vars);
  constexpr float h = 1e-3f;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = grads.of(vars[i]);
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const float saved = inputs[i][j];
      inputs[i][j] = saved + h;
      const double up = evaluate(inputs, nullptr, nullptr);
      inputs[i][j] = saved - h;
      const double down = evaluate(inputs, nullptr, nullptr);
      inputs[i][j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      if (std::abs((up - centre) - (centre - down)) / h > 1e-2 * std::max(1.0, std::abs(numeric))) {
        ++skipped;
        continue;
      }
      diff += std::pow(analytic[j] - numeric, 2);
      norm_a += std::pow(analytic[j], 2);
      norm_n += std::pow(numeric, 2);
    }
    // Float evaluation noise is about eps / h in absolute terms, so small
    // gradients are measured against a floor of 1.
    const double scale = std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1.0});
    EXPECT_LE(std::sqrt(diff) / scale, 1e-3) << "input " << i << " seed " << seed;
  }
  return skipped;
}

// Runs the check on 100 seeds with fresh random inputs each time.
void check_op(const OpBuilder& op, const std::function<std::vector<Tensor>(Rng&)>& make_inputs) {
  std::size_t skipped = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    auto inputs = make_inputs(rng);
    for (const auto& t : inputs) total += t.size();
    skipped += expect_gradients_match(op, std::move(inputs), seed);
  }
  EXPECT_LE(skipped * 50, total) << "too many elements sit on a kink";
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor({2, 3}).reshaped({4}), ShapeError);
  EXPECT_THROW(Tensor({2}).item(), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r.values(), t.values());
  EXPECT_EQ(Tensor::scalar(2.5f).item(), 2.5f);
}

TEST(Tensor, FiniteCheck) {
  Tensor t({3}, 1.0f);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nanf("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Conv1d, MatchesTripleLoopOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t c_in = 1 + rng.index(5), c_out = 1 + rng.index(5), width = 1 + rng.index(5);
    const std::size_t stride = 1 + rng.index(3), padding = rng.index(3);
    const std::size_t length = width + rng.index(16);
    const Tensor x = random_tensor({c_in, length}, rng);
    const Tensor w = random_tensor({c_out, c_in, width}, rng);
    Graph g;
    const Tensor& y = g.value(conv1d(g, g.constant(x), g.constant(w), stride, padding));
    const auto ref = oracle::conv1d(oracle::from_tensor(x), std::vector<double>(w.values().begin(), w.values().end()),
                                    c_out, width, stride, padding);
    ASSERT_EQ(y.dim(1), ref.cols);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref.v[i], 1e-6);
  }
}

TEST(Conv1d, ShapeErrors) {
  Graph g;
  const Var x = g.constant(Tensor({2, 5}));
  EXPECT_THROW(conv1d(g, x, g.constant(Tensor({3, 4, 3})), 1, 1), ShapeError);
  EXPECT_THROW(conv1d(g, x, g.constant(Tensor({3, 2, 9})), 1, 0), ShapeError);
  EXPECT_THROW(conv1d(g, x, g.constant(Tensor({3, 2, 3})), 0, 1), ShapeError);
}

TEST(Gradients, Conv1d) {
  for (std::size_t stride : {1, 2}) {
    check_op([stride](Graph& g, const std::vector<Var>& v) { return conv1d(g, v[0], v[1], stride, 1); },
             [](Rng& rng) { return std::vector<Tensor>{random_tensor({3, 7}, rng), random_tensor({2, 3, 3}, rng)}; });
  }
}

TEST(Gradients, BiasAndLeakyRelu) {
  check_op([](Graph& g, const std::vector<Var>& v) { return leaky_relu(g, channel_bias(g, v[0], v[1]), 0.2f); },
           [](Rng& rng) { return std::vector<Tensor>{random_tensor({3, 5}, rng), random_tensor({3}, rng)}; });
}

TEST(Gradients, ConcatResampleTranspose) {
  check_op(
      [](Graph& g, const std::vector<Var>& v) { return transpose(g, resample_time(g, concat_channels(g, v[0], v[1]), 7)); },
      [](Rng& rng) { return std::vector<Tensor>{random_tensor({2, 4}, rng), random_tensor({3, 4}, rng)}; });
  check_op([](Graph& g, const std::vector<Var>& v) { return resample_time(g, v[0], 3); },
           [](Rng& rng) { return std::vector<Tensor>{random_tensor({2, 9}, rng)}; });
}

TEST(Gradients, MeanTimeAffine) {
  check_op([](Graph& g, const std::vector<Var>& v) { return affine(g, mean_time(g, v[0]), v[1], v[2]); },
           [](Rng& rng) {
             return std::vector<Tensor>{random_tensor({3, 6}, rng), random_tensor({2, 3}, rng), random_tensor({2}, rng)};
           });
}

TEST(Gradients, TimeDiffAndBoneLengths) {
  auto bones = std::make_shared<const BonePairs>(BonePairs{{0, 1}, {1, 2}, {1, 3}});
  check_op([bones](Graph& g, const std::vector<Var>& v) { return time_diff(g, bone_lengths(g, v[0], bones)); },
           [](Rng& rng) { return std::vector<Tensor>{random_tensor({4, 12}, rng)}; });
}

TEST(Gradients, Losses) {
  check_op(
      [](Graph& g, const std::vector<Var>& v) { return add(g, l1_loss(g, v[0], v[1]), scale(g, mean_abs(g, v[0]), 0.5f)); },
      [](Rng& rng) { return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}; });
  for (float label : {0.0f, 1.0f}) {
    check_op([label](Graph& g, const std::vector<Var>& v) { return bce_with_logits(g, v[0], label); },
             [](Rng& rng) { return std::vector<Tensor>{random_tensor({1}, rng, -3.0, 3.0)}; });
  }
}

TEST(Bce, StableForLargeLogits) {
  EXPECT_NEAR(bce_with_logits_value(0.0f, 1.0f), std::numbers::ln2, 1e-7);
  EXPECT_NEAR(bce_with_logits_value(100.0f, 0.0f), 100.0f, 1e-4);
  EXPECT_NEAR(bce_with_logits_value(-100.0f, 1.0f), 100.0f, 1e-4);
  EXPECT_TRUE(std::isfinite(bce_with_logits_value(1e30f, 0.0f)));
  Graph g;
  EXPECT_THROW(bce_with_logits(g, g.constant(Tensor::scalar(0.0f)), 0.5f), InvalidArgument);
}

TEST(Graph, BackwardIsPure) {
  Rng rng(7);
  const Tensor xv = random_tensor({2, 6}, rng), wv = random_tensor({3, 2, 3}, rng);
  Graph g;
  const Var x = g.parameter(xv);
  const Var w = g.parameter(wv);
  const Var loss = mean_abs(g, leaky_relu(g, conv1d(g, x, w, 2, 1), 0.1f));
  const auto a = g.backward(loss);
  const auto b = g.backward(loss);
  EXPECT_EQ(a.of(x), b.of(x));
  EXPECT_EQ(a.of(w), b.of(w));
}

TEST(Graph, UnreachedNodesHaveZeroGradient) {
  const Tensor xv({3}, 1.0f), uv({2, 2}, 5.0f);
  Graph g;
  const Var x = g.parameter(xv);
  const Var unused = g.parameter(uv);
  const Var loss = mean_abs(g, x);
  const auto grads = g.backward(loss);
  EXPECT_TRUE(grads.reached(x));
  EXPECT_FALSE(grads.reached(unused));
  EXPECT_EQ(grads.of(unused), Tensor({2, 2}, 0.0f));
}

TEST(Graph, BackwardNeedsScalar) {
  const Tensor xv({3}, 1.0f);
  Graph g;
  const Var x = g.parameter(xv);
  EXPECT_THROW(g.backward(x), ShapeError);
  Graph other;
  EXPECT_THROW(other.value(Var{5}), InvalidArgument);
}

TEST(Graph, ParametersReferenceCallerTensors) {
  Tensor w({1}, 2.0f);
  Graph g;
  const Var v = g.parameter(w);
  EXPECT_EQ(&g.value(v), &w);
  EXPECT_EQ(g.kind(v), OpKind::kParameter);
  EXPECT_STREQ(op_name(OpKind::kConv1d), "conv1d");
}

TEST(Rng, Reproducible) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(c.index(7), 7u);
  }
}

}  // namespace
}  // namespace s2g
