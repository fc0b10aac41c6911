#pragma once

#include "fusionet/fusion.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fusionet {

/// Encoders, fusion head and classifier for one FusionKind. Only the
/// parameters the kind actually uses are allocated.
template <typename Scalar>
class Model {
 public:
  /// Intermediate values of one forward pass. Members a kind does not
  /// compute are left invalid.
  struct Forward {
    Var<Scalar> visual;
    TextFeatures<Scalar> text;
    AlignmentWeights<Scalar> alignment;
    ContextVectors<Scalar> context;
    Var<Scalar> fused;
    Var<Scalar> probs;
  };

  Model(ModelDims dims, FusionKind kind, bool mask_padding = false)
      : dims_(dims), kind_(kind), mask_padding_(mask_padding) {
    if (dims.image_size < 4 || dims.visual_dim < 1 || dims.hidden < 1 || dims.seq_len < 1 ||
        dims.embed_dim < 1 || dims.attention_dim < 1 || dims.vocab_size < 2 ||
        dims.conv1_channels < 1 || dims.conv2_channels < 1 || dims.baseline_hidden < 1) {
      throw ConfigError("model dimensions must be positive (vocabulary needs PAD and OOV)");
    }
    if (uses_visual(kind)) visual_.emplace(dims);
    if (uses_text(kind)) text_.emplace(dims);
    if (uses_alignment(kind)) {
      alignment_.emplace(dims.visual_dim, dims.text_dim(), dims.attention_dim);
    }
    if (kind == FusionKind::kEarly || kind == FusionKind::kAttentive) {
      baseline_.visual_dense = DenseParams<Scalar>(dims.visual_dim, dims.baseline_hidden);
      baseline_.text_dense = DenseParams<Scalar>(dims.text_dim(), dims.baseline_hidden);
    }
    if (kind == FusionKind::kAttentive) {
      baseline_.pool = AttentionPoolParams<Scalar>(dims.baseline_hidden, dims.attention_dim);
    }
    if (kind == FusionKind::kLate) {
      baseline_.visual_head = DenseParams<Scalar>(dims.visual_dim, 2);
      baseline_.text_head = DenseParams<Scalar>(dims.text_dim(), 2);
    } else {
      head_.emplace(fused_width(kind, dims), 2);
    }
  }

  const ModelDims& dims() const { return dims_; }
  FusionKind kind() const { return kind_; }
  bool mask_padding() const { return mask_padding_; }

  /// Deterministic initialization from a seed; parameters are drawn in visit order.
  void initialize(std::uint64_t seed) {
    Rng rng(seed, 0x6d6f64656cULL);
    if (visual_) visual_->initialize(rng);
    if (text_) text_->initialize(rng);
    if (alignment_) alignment_->initialize(rng, dims_.alignment_gain);
    if (kind_ == FusionKind::kEarly || kind_ == FusionKind::kAttentive) {
      baseline_.visual_dense.initialize(rng);
      baseline_.text_dense.initialize(rng);
    }
    if (kind_ == FusionKind::kAttentive) baseline_.pool.initialize(rng);
    if (kind_ == FusionKind::kLate) {
      baseline_.visual_head.initialize(rng);
      baseline_.text_head.initialize(rng);
    }
    if (head_) head_->initialize(rng);
  }

  /// Calls fn(name, tensor) for every parameter in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn) {
    if (visual_) visual_->visit("visual", fn);
    if (text_) text_->visit("text", fn);
    if (alignment_) alignment_->visit("align", fn);
    if (kind_ == FusionKind::kEarly || kind_ == FusionKind::kAttentive) {
      baseline_.visual_dense.visit("baseline.visual_dense", fn);
      baseline_.text_dense.visit("baseline.text_dense", fn);
    }
    if (kind_ == FusionKind::kAttentive) baseline_.pool.visit("baseline.pool", fn);
    if (kind_ == FusionKind::kLate) {
      baseline_.visual_head.visit("baseline.visual_head", fn);
      baseline_.text_head.visit("baseline.text_head", fn);
    }
    if (head_) head_->visit("head", fn);
  }

  std::vector<std::pair<std::string, Tensor<Scalar>*>> parameters() {
    std::vector<std::pair<std::string, Tensor<Scalar>*>> out;
    visit([&](const std::string& name, Tensor<Scalar>& t) { out.emplace_back(name, &t); });
    return out;
  }

  Index parameter_count() {
    Index n = 0;
    visit([&](const std::string&, Tensor<Scalar>& t) { n += t.size(); });
    return n;
  }

  void zero_grad() {
    visit([](const std::string&, Tensor<Scalar>& t) { t.zero_grad(); });
  }

  /// Copy with every parameter converted to another scalar type.
  template <typename Other>
  Model<Other> cast() const {
    Model<Other> out(dims_, kind_, mask_padding_);
    auto src = const_cast<Model*>(this)->parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<Other>();
    return out;
  }

  Forward forward(Graph<Scalar>& g, const Tensor<Scalar>& image, std::span<const int> ids) {
    Forward out;
    if (uses_visual(kind_)) {
      check_image(image);
      out.visual = encode_visual(g, g.input(image), *visual_);
    }
    return head(g, out, ids);
  }

  /// Same as forward() but with a precomputed [1, d] visual feature vector
  /// standing in for the convolutional encoder.
  Forward forward_features(Graph<Scalar>& g, const Tensor<Scalar>& features,
                           std::span<const int> ids) {
    Forward out;
    if (uses_visual(kind_)) {
      if (features.rows() != 1 || features.cols() != dims_.visual_dim) {
        throw DimensionError("forward_features: expected [1, " + std::to_string(dims_.visual_dim) +
                             "] features, got " + to_string(features.shape()));
      }
      out.visual = g.input(features);
    }
    return head(g, out, ids);
  }

  VisualEncoderParams<Scalar>* visual_params() { return visual_ ? &*visual_ : nullptr; }
  TextEncoderParams<Scalar>* text_params() { return text_ ? &*text_ : nullptr; }
  AlignmentParams<Scalar>* alignment_params() { return alignment_ ? &*alignment_ : nullptr; }
  DenseParams<Scalar>* head_params() { return head_ ? &*head_ : nullptr; }
  BaselineParams<Scalar>& baseline_params() { return baseline_; }

 private:
  void check_image(const Tensor<Scalar>& image) const {
    const Shape expected{dims_.image_size, dims_.image_size, 3};
    if (image.shape() != expected) {
      throw DimensionError("encode_visual: expected image " + to_string(expected) + ", got " +
                           to_string(image.shape()));
    }
  }

  void check_ids(std::span<const int> ids) const {
    if (static_cast<Index>(ids.size()) != dims_.seq_len) {
      throw DimensionError("encode_text: expected " + std::to_string(dims_.seq_len) +
                           " token ids, got " + std::to_string(ids.size()));
    }
    for (int id : ids) {
      if (id < 0 || id >= dims_.vocab_size) {
        throw DimensionError("encode_text: token id " + std::to_string(id) +
                             " outside vocabulary of size " + std::to_string(dims_.vocab_size));
      }
    }
  }

  Forward head(Graph<Scalar>& g, Forward& out, std::span<const int> ids) {
    if (uses_text(kind_)) {
      check_ids(ids);
      out.text = encode_text(g, ids, *text_, mask_padding_);
    }
    if (uses_alignment(kind_)) {
      std::optional<Var<Scalar>> mask;
      if (mask_padding_) mask = padding_mask(g, ids);
      out.alignment = align(g, out.visual, out.text.words, *alignment_, mask);
      out.context = context_vectors(out.alignment.alpha, out.visual, out.text.words);
      out.fused = fuse(kind_, out.context, out.visual, out.text.sentence);
      out.probs = classify(g, out.fused, *head_);
    } else if (kind_ == FusionKind::kTextOnly) {
      out.fused = out.text.sentence;
      out.probs = classify(g, out.fused, *head_);
    } else if (kind_ == FusionKind::kImageOnly) {
      out.fused = out.visual;
      out.probs = classify(g, out.fused, *head_);
    } else {
      BaselineOutput<Scalar> b =
          baseline_fuse(g, kind_, out.visual, out.text.sentence, baseline_, head_ ? &*head_ : nullptr);
      out.fused = b.fused;
      out.probs = b.probs;
    }
    return out;
  }

  /// 0 for real tokens, -1e9 for pads. An all-pad caption is left unmasked so
  /// the softmax stays defined.
  static std::optional<Var<Scalar>> padding_mask(Graph<Scalar>& g, std::span<const int> ids) {
    Matrix<Scalar> mask = Matrix<Scalar>::Zero(1, static_cast<Index>(ids.size()));
    bool any_token = false;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (ids[j] == TextEncoderParams<Scalar>::kPadId) {
        mask(0, static_cast<Index>(j)) = Scalar(-1e9);
      } else {
        any_token = true;
      }
    }
    if (!any_token) return std::nullopt;
    return g.constant(std::move(mask));
  }

  ModelDims dims_;
  FusionKind kind_;
  bool mask_padding_;
  std::optional<VisualEncoderParams<Scalar>> visual_;
  std::optional<TextEncoderParams<Scalar>> text_;
  std::optional<AlignmentParams<Scalar>> alignment_;
  BaselineParams<Scalar> baseline_;
  std::optional<DenseParams<Scalar>> head_;
};

}  // namespace fusionet
