#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "s2g/tensor.hpp"

namespace s2g {

// Handle to a node in a Graph. Only meaningful for the graph that created it.
struct Var {
  std::size_t id = 0;
};

enum class OpKind {
  kConstant,
  kParameter,
  kConv1d,
  kChannelBias,
  kLeakyRelu,
  kConcatChannels,
  kResampleTime,
  kMeanTime,
  kAffine,
  kReshape,
  kTranspose,
  kTimeDiff,
  kBoneLengths,
  kAdd,
  kScale,
  kL1Loss,
  kMeanAbs,
  kBceWithLogits,
};

const char* op_name(OpKind kind) noexcept;

using BonePairs = std::vector<std::pair<std::size_t, std::size_t>>;

class Gradients;

// Per-op settings saved for the backward pass.
struct OpAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t length = 0;
  float slope = 0.0f;
  float factor = 1.0f;
  float label = 0.0f;
  std::shared_ptr<const BonePairs> bones;
};

// Append-only computation graph recording every forward op. Nodes are kept in
// construction order, which is also a valid topological order; backward walks
// them in exact reverse.
//
// Parameter leaves reference caller-owned tensors, which must outlive the
// graph and stay unmodified while it is in use.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  Var constant(Tensor value);
  Var parameter(const Tensor& value);
  Var parameter(Tensor&&) = delete;  // the graph keeps a reference

  // Invalidated by recording further nodes.
  const Tensor& value(Var v) const;
  OpKind kind(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse-mode sweep from a scalar node. Pure: repeated calls on the same
  // graph produce identical results.
  Gradients backward(Var loss) const;

  // Internal: used by the op functions below.
  using Attrs = OpAttrs;
  Var record(OpKind kind, std::array<std::size_t, 3> inputs, std::size_t n_inputs, Tensor value, Attrs attrs = {});

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::array<std::size_t, 3> inputs{};
    std::size_t n_inputs = 0;
    Tensor owned;
    const Tensor* external = nullptr;
    bool needs_grad = false;
    Attrs attrs;

    const Tensor& value() const { return external != nullptr ? *external : owned; }
  };

  const Node& node(Var v) const;
  void backprop_node(const Node& n, const Tensor& grad_out, std::vector<Tensor>& grads,
                     std::vector<bool>& touched) const;

  std::vector<Node> nodes_;
};

// Result of Graph::backward: one gradient per node. Nodes that do not lie on
// a path to the loss report an all-zero gradient of the node's shape.
class Gradients {
 public:
  Gradients(std::vector<Tensor> grads, std::vector<bool> touched);
  const Tensor& of(Var v) const;
  bool reached(Var v) const;

 private:
  std::vector<Tensor> grads_;
  std::vector<bool> touched_;
};

// ---- ops -------------------------------------------------------------------

// input [C_in x T], kernel [C_out x C_in x W] -> [C_out x T'],
// T' = floor((T + 2*padding - W) / stride) + 1. Cross-correlation, zero padding.
Var conv1d(Graph& g, Var input, Var kernel, std::size_t stride, std::size_t padding);
// x [C x T] + bias [C] broadcast along time.
Var channel_bias(Graph& g, Var x, Var bias);
Var leaky_relu(Graph& g, Var x, float slope);
// a [C1 x T], b [C2 x T] -> [(C1 + C2) x T].
Var concat_channels(Graph& g, Var a, Var b);
// Linear interpolation along time with aligned endpoints: [C x T] -> [C x length].
Var resample_time(Graph& g, Var x, std::size_t length);
// [C x T] -> [C], mean over time.
Var mean_time(Graph& g, Var x);
// weight [O x C] * x [C] + bias [O] -> [O].
Var affine(Graph& g, Var x, Var weight, Var bias);
Var reshape(Graph& g, Var x, Shape shape);
// [R x C] -> [C x R].
Var transpose(Graph& g, Var x);
// First difference along axis 0: [T x N] -> [(T-1) x N].
Var time_diff(Graph& g, Var x);
// pose [T x 3K] -> per-frame Euclidean bone lengths [T x B].
Var bone_lengths(Graph& g, Var pose, std::shared_ptr<const BonePairs> bones);
Var add(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, float factor);
// Mean absolute difference over all elements -> scalar.
Var l1_loss(Graph& g, Var pred, Var target);
Var mean_abs(Graph& g, Var x);
// Stable binary cross-entropy on a single logit against label 0 or 1.
Var bce_with_logits(Graph& g, Var logit, float label);

// Scalar form of the same stable expression, for callers outside a graph.
float bce_with_logits_value(float logit, float label) noexcept;

}  // namespace s2g
