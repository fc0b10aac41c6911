#pragma once

#include "fusionet/tensor.hpp"

namespace fusionet {

/// Layer sizes of the whole model. Defaults are the full-scale configuration.
struct ModelDims {
  Index image_size = 150;      // square input side after preprocessing
  Index conv1_channels = 8;
  Index conv2_channels = 16;
  Index visual_dim = 100;      // d: width of the visual dense layer
  Index embed_dim = 64;
  Index hidden = 50;           // N: units per LSTM direction
  Index seq_len = 60;          // l: padded caption length
  Index attention_dim = 100;   // a: width of the alignment network
  Index baseline_hidden = 100; // dense width used by the early/attentive baselines
  Index vocab_size = 2;
  // Multiplier on the Glorot range of the alignment's visual projection W1.
  double alignment_gain = 1.0;

  Index text_dim() const { return 2 * hidden; }

  bool operator==(const ModelDims&) const = default;
};

}  // namespace fusionet
