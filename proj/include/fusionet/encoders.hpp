#pragma once

#include "fusionet/dims.hpp"
#include "fusionet/ops.hpp"
#include "fusionet/random.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace fusionet {

template <typename Scalar>
void glorot_uniform(Tensor<Scalar>& t, Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Index i = 0; i < t.size(); ++i) {
    t.data().data()[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
  }
}

template <typename Scalar>
void uniform_fill(Tensor<Scalar>& t, double lo, double hi, Rng& rng) {
  for (Index i = 0; i < t.size(); ++i) t.data().data()[i] = static_cast<Scalar>(rng.uniform(lo, hi));
}

/// Weight stored input-major ([in, out]) so a row vector x maps to x W + b.
template <typename Scalar>
struct DenseParams {
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;

  DenseParams() = default;
  DenseParams(Index in, Index out)
      : weight(Shape{in, out}, true), bias(Shape{out}, true) {}

  void initialize(Rng& rng) {
    glorot_uniform(weight, weight.shape()[0], weight.shape()[1], rng);
    bias.data().setZero();
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
  }
};

template <typename Scalar>
Var<Scalar> dense(Graph<Scalar>& g, Var<Scalar> x, DenseParams<Scalar>& p) {
  return affine(x, g.parameter(p.weight), g.parameter(p.bias));
}

// ---------------------------------------------------------------------------
// Visual encoder: two conv blocks (3x3 conv, ReLU, 2x2 max pool), global
// average pooling to the map G, then V_f = ReLU(G W + b).

template <typename Scalar>
struct VisualEncoderParams {
  Tensor<Scalar> conv1_kernel;
  Tensor<Scalar> conv1_bias;
  Tensor<Scalar> conv2_kernel;
  Tensor<Scalar> conv2_bias;
  DenseParams<Scalar> dense;

  VisualEncoderParams() = default;
  explicit VisualEncoderParams(const ModelDims& dims)
      : conv1_kernel(Shape{3, 3, 3, dims.conv1_channels}, true),
        conv1_bias(Shape{dims.conv1_channels}, true),
        conv2_kernel(Shape{3, 3, dims.conv1_channels, dims.conv2_channels}, true),
        conv2_bias(Shape{dims.conv2_channels}, true),
        dense(dims.conv2_channels, dims.visual_dim) {}

  void initialize(Rng& rng) {
    const Index c1 = conv1_kernel.shape()[3], c2 = conv2_kernel.shape()[3];
    glorot_uniform(conv1_kernel, 9 * 3, 9 * c1, rng);
    conv1_bias.data().setZero();
    glorot_uniform(conv2_kernel, 9 * c1, 9 * c2, rng);
    conv2_bias.data().setZero();
    dense.initialize(rng);
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".conv1.kernel", conv1_kernel);
    fn(prefix + ".conv1.bias", conv1_bias);
    fn(prefix + ".conv2.kernel", conv2_kernel);
    fn(prefix + ".conv2.bias", conv2_bias);
    dense.visit(prefix + ".dense", fn);
  }
};

/// Feature map entering the dense layer (global average of the last conv block).
template <typename Scalar>
Var<Scalar> visual_feature_map(Graph<Scalar>& g, Var<Scalar> image, VisualEncoderParams<Scalar>& p) {
  if (image.shape().size() != 3 || image.shape()[2] != 3) {
    throw DimensionError("encode_visual: expected an [H, W, 3] image, got " +
                         to_string(image.shape()));
  }
  Var<Scalar> x = relu(conv2d_3x3(image, g.parameter(p.conv1_kernel), g.parameter(p.conv1_bias)));
  x = max_pool_2x2(x);
  x = relu(conv2d_3x3(x, g.parameter(p.conv2_kernel), g.parameter(p.conv2_bias)));
  x = max_pool_2x2(x);
  return global_average_pool(x);
}

/// V_f = ReLU(GAP(convstack(image)) W + b), a [1, d] row vector.
template <typename Scalar>
Var<Scalar> encode_visual(Graph<Scalar>& g, Var<Scalar> image, VisualEncoderParams<Scalar>& p) {
  return relu(dense(g, visual_feature_map(g, image, p), p.dense));
}

// ---------------------------------------------------------------------------
// Text encoder: embedding table followed by a bidirectional LSTM.

/// One LSTM direction. Gate blocks in the 4N-wide matrices are ordered
/// input, forget, candidate, output.
template <typename Scalar>
struct LstmParams {
  Tensor<Scalar> input_weight;      // [E, 4N]
  Tensor<Scalar> recurrent_weight;  // [N, 4N]
  Tensor<Scalar> bias;              // [4N]

  LstmParams() = default;
  LstmParams(Index input, Index hidden)
      : input_weight(Shape{input, 4 * hidden}, true),
        recurrent_weight(Shape{hidden, 4 * hidden}, true),
        bias(Shape{4 * hidden}, true) {}

  Index hidden() const { return recurrent_weight.shape()[0]; }

  void initialize(Rng& rng) {
    const Index n = hidden();
    glorot_uniform(input_weight, input_weight.shape()[0], 4 * n, rng);
    glorot_uniform(recurrent_weight, n, 4 * n, rng);
    bias.data().setZero();
    bias.data().middleCols(n, n).setOnes();
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".input_weight", input_weight);
    fn(prefix + ".recurrent_weight", recurrent_weight);
    fn(prefix + ".bias", bias);
  }
};

template <typename Scalar>
struct TextEncoderParams {
  static constexpr int kPadId = 0;
  static constexpr int kOovId = 1;

  Tensor<Scalar> embedding;  // [V, E]
  LstmParams<Scalar> forward;
  LstmParams<Scalar> backward;

  TextEncoderParams() = default;
  explicit TextEncoderParams(const ModelDims& dims)
      : embedding(Shape{dims.vocab_size, dims.embed_dim}, true),
        forward(dims.embed_dim, dims.hidden),
        backward(dims.embed_dim, dims.hidden) {}

  void initialize(Rng& rng) {
    uniform_fill(embedding, -0.05, 0.05, rng);
    forward.initialize(rng);
    backward.initialize(rng);
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".embedding", embedding);
    forward.visit(prefix + ".forward", fn);
    backward.visit(prefix + ".backward", fn);
  }
};

template <typename Scalar>
struct TextFeatures {
  Var<Scalar> words;     // [l, 2N]; row j is forward h_j concatenated with backward h_j
  Var<Scalar> sentence;  // [1, 2N]; forward state at step l ++ backward state at step 1
};

namespace detail {

/// Runs one LSTM direction over pre-projected inputs (rows of `projected`
/// are x_t W + b). Returns the hidden state per position in sequence order.
/// With `skip` set, masked positions carry the previous state forward.
template <typename Scalar>
std::vector<Var<Scalar>> run_lstm(Graph<Scalar>& g, Var<Scalar> projected, LstmParams<Scalar>& p,
                                  bool reverse, const std::vector<bool>& skip) {
  const Index steps = projected.rows();
  const Index n = p.hidden();
  Var<Scalar> recurrent = g.parameter(p.recurrent_weight);
  Var<Scalar> h = g.constant(Matrix<Scalar>::Zero(1, n));
  Var<Scalar> c = g.constant(Matrix<Scalar>::Zero(1, n));
  std::vector<Var<Scalar>> states(static_cast<std::size_t>(steps));
  for (Index k = 0; k < steps; ++k) {
    const Index t = reverse ? steps - 1 - k : k;
    if (skip.empty() || !skip[static_cast<std::size_t>(t)]) {
      Var<Scalar> z = add(slice_rows(projected, t, 1), matmul(h, recurrent));
      Var<Scalar> in_gate = sigmoid(slice_cols(z, 0, n));
      Var<Scalar> forget_gate = sigmoid(slice_cols(z, n, n));
      Var<Scalar> candidate = tanh(slice_cols(z, 2 * n, n));
      Var<Scalar> out_gate = sigmoid(slice_cols(z, 3 * n, n));
      c = add(mul(forget_gate, c), mul(in_gate, candidate));
      h = mul(out_gate, tanh(c));
    }
    states[static_cast<std::size_t>(t)] = h;
  }
  return states;
}

}  // namespace detail

/// Embeds `ids` and runs the BiLSTM. Pad positions are processed like any
/// other token unless `mask_padding` is set.
template <typename Scalar>
TextFeatures<Scalar> encode_text(Graph<Scalar>& g, std::span<const int> ids,
                                 TextEncoderParams<Scalar>& p, bool mask_padding = false) {
  Var<Scalar> embedded = embedding(g.parameter(p.embedding), ids);
  std::vector<bool> skip;
  if (mask_padding) {
    for (int id : ids) skip.push_back(id == TextEncoderParams<Scalar>::kPadId);
  }
  auto project = [&](LstmParams<Scalar>& lstm) {
    return affine(embedded, g.parameter(lstm.input_weight), g.parameter(lstm.bias));
  };
  std::vector<Var<Scalar>> fwd = detail::run_lstm(g, project(p.forward), p.forward, false, skip);
  std::vector<Var<Scalar>> bwd = detail::run_lstm(g, project(p.backward), p.backward, true, skip);

  TextFeatures<Scalar> out;
  out.words = concat<Scalar>({stack_rows(fwd), stack_rows(bwd)});
  out.sentence = concat<Scalar>({fwd.back(), bwd.front()});
  return out;
}

}  // namespace fusionet
