#pragma once

#include "fusionet/model.hpp"
#include "fusionet/random.hpp"

#include <vector>

namespace fusionet::testing {

/// The gradient-check configuration: d=4, N=2, l=3, a=3, 8x8 images, 2-word vocabulary.
inline ModelDims tiny_dims() {
  ModelDims dims;
  dims.image_size = 8;
  dims.conv1_channels = 3;
  dims.conv2_channels = 4;
  dims.visual_dim = 4;
  dims.embed_dim = 5;
  dims.hidden = 2;
  dims.seq_len = 3;
  dims.attention_dim = 3;
  dims.baseline_hidden = 4;
  dims.vocab_size = 4;  // PAD, OOV + 2 words
  return dims;
}

template <typename Scalar>
Tensor<Scalar> random_image(Index size, Rng& rng) {
  Tensor<Scalar> image(Shape{size, size, 3});
  for (Index i = 0; i < image.size(); ++i) image.data().data()[i] = static_cast<Scalar>(rng.uniform());
  return image;
}

inline std::vector<int> random_ids(Index length, Index vocab, Rng& rng) {
  std::vector<int> ids(static_cast<std::size_t>(length));
  for (int& id : ids) id = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
  return ids;
}

template <typename Scalar>
void fill_uniform(Tensor<Scalar>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (Index i = 0; i < t.size(); ++i) t.data().data()[i] = static_cast<Scalar>(rng.uniform(lo, hi));
}

}  // namespace fusionet::testing
