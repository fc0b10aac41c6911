#pragma once

#include "fusionet/ops.hpp"

namespace fusionet {

inline constexpr double kProbabilityClamp = 1e-7;

/// -log p[label] for one sample's [1, 2] class probabilities, with p clamped
/// to [1e-7, 1 - 1e-7] first. Batch averaging is done by the caller.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> probs, int label) {
  if (probs.rows() != 1 || label < 0 || label >= probs.cols()) {
    throw DimensionError("cross_entropy: label " + std::to_string(label) +
                         " invalid for probabilities " + to_string(probs.shape()));
  }
  const Scalar lo = static_cast<Scalar>(kProbabilityClamp);
  Var<Scalar> p = clamp(slice_cols(probs, label, 1), lo, Scalar(1) - lo);
  return scale(log(p), Scalar(-1));
}

}  // namespace fusionet
