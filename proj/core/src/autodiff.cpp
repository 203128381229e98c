#include "s2g/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "s2g/error.hpp"

namespace s2g {

const char* op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kChannelBias: return "channel_bias";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kConcatChannels: return "concat_channels";
    case OpKind::kResampleTime: return "resample_time";
    case OpKind::kMeanTime: return "mean_time";
    case OpKind::kAffine: return "affine";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kTimeDiff: return "time_diff";
    case OpKind::kBoneLengths: return "bone_lengths";
    case OpKind::kAdd: return "add";
    case OpKind::kScale: return "scale";
    case OpKind::kL1Loss: return "l1_loss";
    case OpKind::kMeanAbs: return "mean_abs";
    case OpKind::kBceWithLogits: return "bce_with_logits";
  }
  return "unknown";
}

// ---- graph -----------------------------------------------------------------

Var Graph::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(const Tensor& value) {
  Node n;
  n.kind = OpKind::kParameter;
  n.external = &value;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw InvalidArgument(fmt::format("var {} does not belong to this graph", v.id));
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value(); }
OpKind Graph::kind(Var v) const { return node(v).kind; }

Var Graph::record(OpKind kind, std::array<std::size_t, 3> inputs, std::size_t n_inputs, Tensor value, Attrs attrs) {
  Node n;
  n.kind = kind;
  n.inputs = inputs;
  n.n_inputs = n_inputs;
  n.owned = std::move(value);
  n.attrs = std::move(attrs);
  for (std::size_t i = 0; i < n_inputs; ++i) n.needs_grad = n.needs_grad || nodes_[inputs[i]].needs_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Gradients::Gradients(std::vector<Tensor> grads, std::vector<bool> touched)
    : grads_(std::move(grads)), touched_(std::move(touched)) {}

const Tensor& Gradients::of(Var v) const { return grads_.at(v.id); }
bool Gradients::reached(Var v) const { return touched_.at(v.id); }

Gradients Graph::backward(Var loss) const {
  const Node& root = node(loss);
  if (root.value().size() != 1) {
    throw ShapeError(fmt::format("backward needs a scalar loss, got shape {}", shape_string(root.value().shape())));
  }
  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> touched(nodes_.size(), false);
  grads[loss.id] = Tensor(root.value().shape(), 1.0f);
  touched[loss.id] = true;

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!touched[i] || !n.needs_grad || n.n_inputs == 0) continue;
    backprop_node(n, grads[i], grads, touched);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!touched[i]) grads[i] = Tensor(nodes_[i].value().shape(), 0.0f);
  }
  return Gradients(std::move(grads), std::move(touched));
}

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(fmt::format("{}: {}", op, what));
}

// Valid output index range [lo, hi) for tap k so that t*stride + k - padding lies in [0, in_len).
std::pair<std::size_t, std::size_t> tap_range(std::size_t k, std::size_t stride, std::size_t padding,
                                              std::size_t in_len, std::size_t out_len) {
  const auto off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(padding);
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t lo = 0;
  if (off < 0) lo = (-off + s - 1) / s;
  std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(in_len) - 1 - off);
  hi = hi < 0 ? 0 : hi / s + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_len));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct ResampleTap {
  std::size_t i0;
  std::size_t i1;
  float frac;
};

std::vector<ResampleTap> resample_taps(std::size_t in_len, std::size_t out_len) {
  std::vector<ResampleTap> taps(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    double pos = out_len == 1 ? 0.0
                              : static_cast<double>(j) * static_cast<double>(in_len - 1) /
                                    static_cast<double>(out_len - 1);
    auto i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 >= in_len) i0 = in_len - 1;
    const std::size_t i1 = std::min(i0 + 1, in_len - 1);
    taps[j] = {i0, i1, static_cast<float>(pos - static_cast<double>(i0))};
  }
  return taps;
}

float sigmoid(float x) noexcept {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

float sign(float x) noexcept { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); }

Tensor& grad_slot(std::vector<Tensor>& grads, std::vector<bool>& touched, std::size_t id, const Shape& shape) {
  if (!touched[id]) {
    grads[id] = Tensor(shape, 0.0f);
    touched[id] = true;
  }
  return grads[id];
}

}  // namespace

float bce_with_logits_value(float logit, float label) noexcept {
  return std::max(logit, 0.0f) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

void Graph::backprop_node(const Node& n, const Tensor& go, std::vector<Tensor>& grads,
                          std::vector<bool>& touched) const {
  auto input = [&](std::size_t i) -> const Node& { return nodes_[n.inputs[i]]; };
  auto wants = [&](std::size_t i) { return nodes_[n.inputs[i]].needs_grad; };
  auto slot = [&](std::size_t i) -> Tensor& {
    return grad_slot(grads, touched, n.inputs[i], nodes_[n.inputs[i]].value().shape());
  };

  switch (n.kind) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      return;

    case OpKind::kConv1d: {
      const Tensor& x = input(0).value();
      const Tensor& w = input(1).value();
      const std::size_t ci_n = x.dim(0), t_in = x.dim(1);
      const std::size_t co_n = w.dim(0), width = w.dim(2);
      const std::size_t t_out = go.dim(1);
      const std::size_t stride = n.attrs.stride, pad = n.attrs.padding;
      const bool gx_on = wants(0), gw_on = wants(1);
      float* gx = gx_on ? slot(0).data().data() : nullptr;
      float* gw = gw_on ? slot(1).data().data() : nullptr;
      for (std::size_t co = 0; co < co_n; ++co) {
        const float* gorow = go.data().data() + co * t_out;
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          const float* xrow = x.data().data() + ci * t_in;
          for (std::size_t k = 0; k < width; ++k) {
            const auto [lo, hi] = tap_range(k, stride, pad, t_in, t_out);
            const std::size_t widx = (co * ci_n + ci) * width + k;
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
            if (gx_on) {
              const float wv = w[widx];
              float* gxrow = gx + ci * t_in;
              for (std::size_t t = lo; t < hi; ++t) gxrow[static_cast<std::ptrdiff_t>(t * stride) + off] += wv * gorow[t];
            }
            if (gw_on) {
              float acc = 0.0f;
              for (std::size_t t = lo; t < hi; ++t) acc += gorow[t] * xrow[static_cast<std::ptrdiff_t>(t * stride) + off];
              gw[widx] += acc;
            }
          }
        }
      }
      return;
    }

    case OpKind::kChannelBias: {
      const std::size_t c_n = go.dim(0), t_n = go.dim(1);
      if (wants(0)) {
        Tensor& gx = slot(0);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (wants(1)) {
        Tensor& gb = slot(1);
        for (std::size_t c = 0; c < c_n; ++c) {
          float acc = 0.0f;
          for (std::size_t t = 0; t < t_n; ++t) acc += go[c * t_n + t];
          gb[c] += acc;
        }
      }
      return;
    }

    case OpKind::kLeakyRelu: {
      const Tensor& x = input(0).value();
      Tensor& gx = slot(0);
      const float slope = n.attrs.slope;
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += x[i] >= 0.0f ? go[i] : slope * go[i];
      return;
    }

    case OpKind::kConcatChannels: {
      const std::size_t na = input(0).value().size();
      if (wants(0)) {
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
      }
      if (wants(1)) {
        Tensor& gb = slot(1);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[na + i];
      }
      return;
    }

    case OpKind::kResampleTime: {
      const Tensor& x = input(0).value();
      const std::size_t c_n = x.dim(0), t_in = x.dim(1), t_out = go.dim(1);
      const auto taps = resample_taps(t_in, t_out);
      Tensor& gx = slot(0);
      for (std::size_t c = 0; c < c_n; ++c) {
        for (std::size_t j = 0; j < t_out; ++j) {
          const float g = go[c * t_out + j];
          gx[c * t_in + taps[j].i0] += (1.0f - taps[j].frac) * g;
          gx[c * t_in + taps[j].i1] += taps[j].frac * g;
        }
      }
      return;
    }

    case OpKind::kMeanTime: {
      const Tensor& x = input(0).value();
      const std::size_t c_n = x.dim(0), t_n = x.dim(1);
      Tensor& gx = slot(0);
      const float inv = 1.0f / static_cast<float>(t_n);
      for (std::size_t c = 0; c < c_n; ++c) {
        for (std::size_t t = 0; t < t_n; ++t) gx[c * t_n + t] += go[c] * inv;
      }
      return;
    }

    case OpKind::kAffine: {
      const Tensor& x = input(0).value();
      const Tensor& w = input(1).value();
      const std::size_t o_n = w.dim(0), c_n = w.dim(1);
      if (wants(0)) {
        Tensor& gx = slot(0);
        for (std::size_t o = 0; o < o_n; ++o) {
          for (std::size_t c = 0; c < c_n; ++c) gx[c] += w[o * c_n + c] * go[o];
        }
      }
      if (wants(1)) {
        Tensor& gw = slot(1);
        for (std::size_t o = 0; o < o_n; ++o) {
          for (std::size_t c = 0; c < c_n; ++c) gw[o * c_n + c] += go[o] * x[c];
        }
      }
      if (wants(2)) {
        Tensor& gb = slot(2);
        for (std::size_t o = 0; o < o_n; ++o) gb[o] += go[o];
      }
      return;
    }

    case OpKind::kReshape: {
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      return;
    }

    case OpKind::kTranspose: {
      const std::size_t rows = go.dim(1), cols = go.dim(0);  // input is [rows x cols]
      Tensor& gx = slot(0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += go[c * rows + r];
      }
      return;
    }

    case OpKind::kTimeDiff: {
      const std::size_t t_out = go.dim(0), width = go.dim(1);
      Tensor& gx = slot(0);
      for (std::size_t t = 0; t < t_out; ++t) {
        for (std::size_t i = 0; i < width; ++i) {
          const float g = go[t * width + i];
          gx[(t + 1) * width + i] += g;
          gx[t * width + i] -= g;
        }
      }
      return;
    }

    case OpKind::kBoneLengths: {
      const Tensor& x = input(0).value();
      const auto& bones = *n.attrs.bones;
      const std::size_t t_n = x.dim(0), width = x.dim(1), b_n = bones.size();
      Tensor& gx = slot(0);
      for (std::size_t t = 0; t < t_n; ++t) {
        const float* row = x.data().data() + t * width;
        float* grow = gx.data().data() + t * width;
        for (std::size_t b = 0; b < b_n; ++b) {
          const float len = n.value()[t * b_n + b];
          if (len <= 0.0f) continue;
          const float g = go[t * b_n + b] / len;
          const std::size_t p = bones[b].first * 3, c = bones[b].second * 3;
          for (std::size_t a = 0; a < 3; ++a) {
            const float d = (row[c + a] - row[p + a]) * g;
            grow[c + a] += d;
            grow[p + a] -= d;
          }
        }
      }
      return;
    }

    case OpKind::kAdd: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        Tensor& gx = slot(k);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      return;
    }

    case OpKind::kScale: {
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += n.attrs.factor * go[i];
      return;
    }

    case OpKind::kL1Loss:
    case OpKind::kMeanAbs: {
      const Tensor& a = input(0).value();
      const Tensor* b = n.kind == OpKind::kL1Loss ? &input(1).value() : nullptr;
      const float scale_g = go[0] / static_cast<float>(a.size());
      const bool ga_on = wants(0);
      const bool gb_on = b != nullptr && wants(1);
      Tensor* ga = ga_on ? &slot(0) : nullptr;
      Tensor* gb = gb_on ? &slot(1) : nullptr;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const float s = sign(a[i] - (b != nullptr ? (*b)[i] : 0.0f)) * scale_g;
        if (ga != nullptr) (*ga)[i] += s;
        if (gb != nullptr) (*gb)[i] -= s;
      }
      return;
    }

    case OpKind::kBceWithLogits: {
      const float x = input(0).value()[0];
      slot(0)[0] += (sigmoid(x) - n.attrs.label) * go[0];
      return;
    }
  }
}

// ---- forward ops -------------------------------------------------------------

Var conv1d(Graph& g, Var input, Var kernel, std::size_t stride, std::size_t padding) {
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(kernel);
  require(x.rank() == 2, "conv1d", fmt::format("input must be [C x T], got {}", shape_string(x.shape())));
  require(w.rank() == 3, "conv1d", fmt::format("kernel must be [C_out x C_in x W], got {}", shape_string(w.shape())));
  require(w.dim(1) == x.dim(0), "conv1d",
          fmt::format("kernel expects {} input channels, input has {}", w.dim(1), x.dim(0)));
  require(stride >= 1, "conv1d", "stride must be positive");
  const std::size_t ci_n = x.dim(0), t_in = x.dim(1), co_n = w.dim(0), width = w.dim(2);
  require(t_in + 2 * padding >= width, "conv1d",
          fmt::format("padded length {} shorter than kernel width {}", t_in + 2 * padding, width));
  const std::size_t t_out = (t_in + 2 * padding - width) / stride + 1;

  Tensor out({co_n, t_out}, 0.0f);
  for (std::size_t co = 0; co < co_n; ++co) {
    float* orow = out.data().data() + co * t_out;
    for (std::size_t ci = 0; ci < ci_n; ++ci) {
      const float* xrow = x.data().data() + ci * t_in;
      for (std::size_t k = 0; k < width; ++k) {
        const float wv = w[(co * ci_n + ci) * width + k];
        const auto [lo, hi] = tap_range(k, stride, padding, t_in, t_out);
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(padding);
        if (stride == 1) {
          const float* src = xrow + off;
          for (std::size_t t = lo; t < hi; ++t) orow[t] += wv * src[t];
        } else {
          for (std::size_t t = lo; t < hi; ++t) orow[t] += wv * xrow[static_cast<std::ptrdiff_t>(t * stride) + off];
        }
      }
    }
  }
  Graph::Attrs attrs;
  attrs.stride = stride;
  attrs.padding = padding;
  return g.record(OpKind::kConv1d, {input.id, kernel.id, 0}, 2, std::move(out), attrs);
}

Var channel_bias(Graph& g, Var x, Var bias) {
  const Tensor& xv = g.value(x);
  const Tensor& bv = g.value(bias);
  require(xv.rank() == 2, "channel_bias", "input must be [C x T]");
  require(bv.size() == xv.dim(0), "channel_bias",
          fmt::format("bias has {} values for {} channels", bv.size(), xv.dim(0)));
  Tensor out = xv;
  const std::size_t t_n = xv.dim(1);
  for (std::size_t c = 0; c < xv.dim(0); ++c) {
    for (std::size_t t = 0; t < t_n; ++t) out[c * t_n + t] += bv[c];
  }
  return g.record(OpKind::kChannelBias, {x.id, bias.id, 0}, 2, std::move(out));
}

Var leaky_relu(Graph& g, Var x, float slope) {
  if (!std::isfinite(slope)) throw InvalidArgument("leaky_relu: slope must be finite");
  Tensor out = g.value(x);
  for (auto& v : out.data()) v = v >= 0.0f ? v : slope * v;
  Graph::Attrs attrs;
  attrs.slope = slope;
  return g.record(OpKind::kLeakyRelu, {x.id, 0, 0}, 1, std::move(out), attrs);
}

Var concat_channels(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require(av.rank() == 2 && bv.rank() == 2, "concat_channels", "inputs must be [C x T]");
  require(av.dim(1) == bv.dim(1), "concat_channels",
          fmt::format("time lengths differ: {} vs {}", av.dim(1), bv.dim(1)));
  std::vector<float> data;
  data.reserve(av.size() + bv.size());
  data.insert(data.end(), av.values().begin(), av.values().end());
  data.insert(data.end(), bv.values().begin(), bv.values().end());
  return g.record(OpKind::kConcatChannels, {a.id, b.id, 0}, 2,
                  Tensor({av.dim(0) + bv.dim(0), av.dim(1)}, std::move(data)));
}

Var resample_time(Graph& g, Var x, std::size_t length) {
  const Tensor& xv = g.value(x);
  require(xv.rank() == 2, "resample_time", "input must be [C x T]");
  require(length >= 1, "resample_time", "target length must be positive");
  const std::size_t c_n = xv.dim(0), t_in = xv.dim(1);
  const auto taps = resample_taps(t_in, length);
  Tensor out({c_n, length}, 0.0f);
  for (std::size_t c = 0; c < c_n; ++c) {
    const float* row = xv.data().data() + c * t_in;
    for (std::size_t j = 0; j < length; ++j) {
      out[c * length + j] = (1.0f - taps[j].frac) * row[taps[j].i0] + taps[j].frac * row[taps[j].i1];
    }
  }
  Graph::Attrs attrs;
  attrs.length = length;
  return g.record(OpKind::kResampleTime, {x.id, 0, 0}, 1, std::move(out), attrs);
}

Var mean_time(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  require(xv.rank() == 2, "mean_time", "input must be [C x T]");
  const std::size_t c_n = xv.dim(0), t_n = xv.dim(1);
  Tensor out({c_n}, 0.0f);
  for (std::size_t c = 0; c < c_n; ++c) {
    float acc = 0.0f;
    for (std::size_t t = 0; t < t_n; ++t) acc += xv[c * t_n + t];
    out[c] = acc / static_cast<float>(t_n);
  }
  return g.record(OpKind::kMeanTime, {x.id, 0, 0}, 1, std::move(out));
}

Var affine(Graph& g, Var x, Var weight, Var bias) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(weight);
  const Tensor& bv = g.value(bias);
  require(wv.rank() == 2, "affine", "weight must be [O x C]");
  require(wv.dim(1) == xv.size(), "affine", fmt::format("weight expects {} inputs, got {}", wv.dim(1), xv.size()));
  require(bv.size() == wv.dim(0), "affine", "bias length must equal output count");
  const std::size_t o_n = wv.dim(0), c_n = wv.dim(1);
  Tensor out({o_n}, 0.0f);
  for (std::size_t o = 0; o < o_n; ++o) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < c_n; ++c) acc += wv[o * c_n + c] * xv[c];
    out[o] = acc + bv[o];
  }
  return g.record(OpKind::kAffine, {x.id, weight.id, bias.id}, 3, std::move(out));
}

Var reshape(Graph& g, Var x, Shape shape) {
  return g.record(OpKind::kReshape, {x.id, 0, 0}, 1, g.value(x).reshaped(std::move(shape)));
}

Var transpose(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  require(xv.rank() == 2, "transpose", "input must be 2-D");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out({cols, rows}, 0.0f);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = xv[r * cols + c];
  }
  return g.record(OpKind::kTranspose, {x.id, 0, 0}, 1, std::move(out));
}

Var time_diff(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  require(xv.rank() == 2, "time_diff", "input must be [T x N]");
  require(xv.dim(0) >= 2, "time_diff", "need at least two time steps");
  const std::size_t t_out = xv.dim(0) - 1, width = xv.dim(1);
  Tensor out({t_out, width}, 0.0f);
  for (std::size_t t = 0; t < t_out; ++t) {
    for (std::size_t i = 0; i < width; ++i) out[t * width + i] = xv[(t + 1) * width + i] - xv[t * width + i];
  }
  return g.record(OpKind::kTimeDiff, {x.id, 0, 0}, 1, std::move(out));
}

Var bone_lengths(Graph& g, Var pose, std::shared_ptr<const BonePairs> bones) {
  const Tensor& xv = g.value(pose);
  require(bones != nullptr && !bones->empty(), "bone_lengths", "need at least one bone");
  require(xv.rank() == 2 && xv.dim(1) % 3 == 0, "bone_lengths", "pose must be [T x 3K]");
  const std::size_t t_n = xv.dim(0), width = xv.dim(1), k_n = width / 3, b_n = bones->size();
  for (const auto& [p, c] : *bones) {
    require(p < k_n && c < k_n, "bone_lengths", fmt::format("bone ({}, {}) outside {} keypoints", p, c, k_n));
  }
  Tensor out({t_n, b_n}, 0.0f);
  for (std::size_t t = 0; t < t_n; ++t) {
    const float* row = xv.data().data() + t * width;
    for (std::size_t b = 0; b < b_n; ++b) {
      const std::size_t p = (*bones)[b].first * 3, c = (*bones)[b].second * 3;
      float acc = 0.0f;
      for (std::size_t a = 0; a < 3; ++a) {
        const float d = row[c + a] - row[p + a];
        acc += d * d;
      }
      out[t * b_n + b] = std::sqrt(acc);
    }
  }
  Graph::Attrs attrs;
  attrs.bones = std::move(bones);
  return g.record(OpKind::kBoneLengths, {pose.id, 0, 0}, 1, std::move(out), attrs);
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require(av.shape() == bv.shape(), "add",
          fmt::format("shape mismatch {} vs {}", shape_string(av.shape()), shape_string(bv.shape())));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.record(OpKind::kAdd, {a.id, b.id, 0}, 2, std::move(out));
}

Var scale(Graph& g, Var x, float factor) {
  Tensor out = g.value(x);
  for (auto& v : out.data()) v *= factor;
  Graph::Attrs attrs;
  attrs.factor = factor;
  return g.record(OpKind::kScale, {x.id, 0, 0}, 1, std::move(out), attrs);
}

Var l1_loss(Graph& g, Var pred, Var target) {
  const Tensor& pv = g.value(pred);
  const Tensor& tv = g.value(target);
  require(pv.shape() == tv.shape(), "l1_loss",
          fmt::format("shape mismatch {} vs {}", shape_string(pv.shape()), shape_string(tv.shape())));
  float acc = 0.0f;
  for (std::size_t i = 0; i < pv.size(); ++i) acc += std::abs(pv[i] - tv[i]);
  return g.record(OpKind::kL1Loss, {pred.id, target.id, 0}, 2,
                  Tensor::scalar(acc / static_cast<float>(pv.size())));
}

Var mean_abs(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  float acc = 0.0f;
  for (float v : xv.data()) acc += std::abs(v);
  return g.record(OpKind::kMeanAbs, {x.id, 0, 0}, 1, Tensor::scalar(acc / static_cast<float>(xv.size())));
}

Var bce_with_logits(Graph& g, Var logit, float label) {
  const Tensor& xv = g.value(logit);
  require(xv.size() == 1, "bce_with_logits", "logit must be a single value");
  if (label != 0.0f && label != 1.0f) throw InvalidArgument("bce_with_logits: label must be 0 or 1");
  Graph::Attrs attrs;
  attrs.label = label;
  return g.record(OpKind::kBceWithLogits, {logit.id, 0, 0}, 1,
                  Tensor::scalar(bce_with_logits_value(xv[0], label)), attrs);
}

}  // namespace s2g
