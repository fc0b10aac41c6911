#pragma once

#include "fusionet/encoders.hpp"

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fusionet {

/// Unknown fusion kind or an otherwise unusable configuration value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class FusionKind {
  kMcaScf,
  kVgcf,
  kTgcf,
  kMcf,
  kEarly,
  kLate,
  kAttentive,
  kTextOnly,
  kImageOnly,
};

inline constexpr std::array<FusionKind, 9> kAllFusionKinds = {
    FusionKind::kMcaScf, FusionKind::kVgcf,     FusionKind::kTgcf,
    FusionKind::kMcf,    FusionKind::kEarly,    FusionKind::kLate,
    FusionKind::kAttentive, FusionKind::kTextOnly, FusionKind::kImageOnly};

/// The seven multimodal heads compared by ablation runs.
inline constexpr std::array<FusionKind, 7> kAblationKinds = {
    FusionKind::kMcaScf, FusionKind::kVgcf,  FusionKind::kTgcf,    FusionKind::kMcf,
    FusionKind::kEarly,  FusionKind::kLate, FusionKind::kAttentive};

inline std::string_view to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::kMcaScf: return "mca_scf";
    case FusionKind::kVgcf: return "vgcf";
    case FusionKind::kTgcf: return "tgcf";
    case FusionKind::kMcf: return "mcf";
    case FusionKind::kEarly: return "early";
    case FusionKind::kLate: return "late";
    case FusionKind::kAttentive: return "attentive";
    case FusionKind::kTextOnly: return "text_only";
    case FusionKind::kImageOnly: return "image_only";
  }
  return "unknown";
}

inline std::string valid_fusion_kinds() {
  std::string out;
  for (FusionKind k : kAllFusionKinds) {
    if (!out.empty()) out += ", ";
    out += to_string(k);
  }
  return out;
}

inline FusionKind parse_fusion_kind(std::string_view name) {
  for (FusionKind k : kAllFusionKinds) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown fusion kind '" + std::string(name) + "'; valid kinds: " +
                    valid_fusion_kinds());
}

/// Kinds built on the alignment model (context vectors + concatenation).
inline bool uses_alignment(FusionKind kind) {
  return kind == FusionKind::kMcaScf || kind == FusionKind::kVgcf || kind == FusionKind::kTgcf ||
         kind == FusionKind::kMcf;
}

inline bool uses_visual(FusionKind kind) { return kind != FusionKind::kTextOnly; }
inline bool uses_text(FusionKind kind) { return kind != FusionKind::kImageOnly; }

/// Width of the representation handed to the classifier. LATE has no single
/// fused vector and reports 0.
inline Index fused_width(FusionKind kind, const ModelDims& dims) {
  const Index d = dims.visual_dim, t = dims.text_dim();
  switch (kind) {
    case FusionKind::kMcaScf: return d + t + d + t;
    case FusionKind::kVgcf: return d + t;
    case FusionKind::kTgcf: return t + d;
    case FusionKind::kMcf: return d + t;
    case FusionKind::kEarly: return 2 * dims.baseline_hidden;
    case FusionKind::kLate: return 0;
    case FusionKind::kAttentive: return dims.baseline_hidden;
    case FusionKind::kTextOnly: return t;
    case FusionKind::kImageOnly: return d;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Alignment model: score_j = v_a^T tanh(W1 V_f + W2 h_j), alpha = softmax(score).

template <typename Scalar>
struct AlignmentParams {
  Tensor<Scalar> visual_weight;  // W1, [d, a]
  Tensor<Scalar> text_weight;    // W2, [2N, a]
  Tensor<Scalar> score_vector;   // v_a, [a, 1]

  AlignmentParams() = default;
  AlignmentParams(Index visual_dim, Index text_dim, Index attention_dim)
      : visual_weight(Shape{visual_dim, attention_dim}, true),
        text_weight(Shape{text_dim, attention_dim}, true),
        score_vector(Shape{attention_dim, 1}, true) {
    if (attention_dim < 1) throw ConfigError("attention width must be at least 1");
  }

  void initialize(Rng& rng, double visual_gain = 1.0) {
    const Index a = score_vector.shape()[0];
    glorot_uniform(visual_weight, visual_weight.shape()[0], a, rng);
    visual_weight.data() *= static_cast<Scalar>(visual_gain);
    glorot_uniform(text_weight, text_weight.shape()[0], a, rng);
    glorot_uniform(score_vector, a, 1, rng);
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".visual_weight", visual_weight);
    fn(prefix + ".text_weight", text_weight);
    fn(prefix + ".score_vector", score_vector);
  }
};

template <typename Scalar>
struct AlignmentWeights {
  Var<Scalar> scores;  // [1, l] raw scores
  Var<Scalar> alpha;   // [1, l] normalized weights
};

/// Raw alignment scores, one per word position.
template <typename Scalar>
Var<Scalar> alignment_scores(Graph<Scalar>& g, Var<Scalar> visual, Var<Scalar> words,
                             AlignmentParams<Scalar>& p) {
  if (visual.rows() != 1 || visual.cols() != p.visual_weight.rows()) {
    throw DimensionError("align: visual feature " + to_string(visual.shape()) +
                         " does not match W1 " + to_string(p.visual_weight.shape()));
  }
  if (words.cols() != p.text_weight.rows()) {
    throw DimensionError("align: word features " + to_string(words.shape()) +
                         " do not match W2 " + to_string(p.text_weight.shape()));
  }
  Var<Scalar> projected_visual = matmul(visual, g.parameter(p.visual_weight));  // [1, a]
  Var<Scalar> projected_words = matmul(words, g.parameter(p.text_weight));      // [l, a]
  Var<Scalar> hidden = tanh(add(projected_words, projected_visual));
  return transpose(matmul(hidden, g.parameter(p.score_vector)));
}

/// `score_mask`, when given, is added to the scores before normalization
/// (0 for kept positions, a large negative value for excluded ones).
template <typename Scalar>
AlignmentWeights<Scalar> align(Graph<Scalar>& g, Var<Scalar> visual, Var<Scalar> words,
                               AlignmentParams<Scalar>& p,
                               std::optional<Var<Scalar>> score_mask = std::nullopt) {
  AlignmentWeights<Scalar> out;
  out.scores = alignment_scores(g, visual, words, p);
  out.alpha = softmax(score_mask ? add(out.scores, *score_mask) : out.scores);
  return out;
}

template <typename Scalar>
struct ContextVectors {
  Var<Scalar> visual;  // C_v, [1, d]
  Var<Scalar> text;    // C_t, [1, 2N]
};

/// C_v = sum_j alpha_j V_f and C_t = sum_j alpha_j h_j, evaluated literally.
/// Because the weights sum to one, C_v reproduces V_f.
template <typename Scalar>
ContextVectors<Scalar> context_vectors(Var<Scalar> alpha, Var<Scalar> visual, Var<Scalar> words) {
  if (alpha.rows() != 1 || alpha.cols() != words.rows()) {
    throw DimensionError("context_vectors: alpha " + to_string(alpha.shape()) +
                         " does not match word features " + to_string(words.shape()));
  }
  ContextVectors<Scalar> out;
  out.visual = matmul(alpha, repeat_rows(visual, words.rows()));
  out.text = matmul(alpha, words);
  return out;
}

/// Concatenation heads. Operand order follows each head's definition:
///   mca_scf: C_v | C_t | V_f | h_l      vgcf: C_v | h_l
///   tgcf:    C_t | V_f                  mcf:  C_v | C_t
template <typename Scalar>
Var<Scalar> fuse(FusionKind kind, const ContextVectors<Scalar>& ctx, Var<Scalar> visual,
                 Var<Scalar> sentence) {
  switch (kind) {
    case FusionKind::kMcaScf: return concat<Scalar>({ctx.visual, ctx.text, visual, sentence});
    case FusionKind::kVgcf: return concat<Scalar>({ctx.visual, sentence});
    case FusionKind::kTgcf: return concat<Scalar>({ctx.text, visual});
    case FusionKind::kMcf: return concat<Scalar>({ctx.visual, ctx.text});
    default: break;
  }
  throw ConfigError("fuse: '" + std::string(to_string(kind)) + "' is not a concatenation head");
}

// ---------------------------------------------------------------------------
// Classification layer: two-way softmax, class 1 = hateful/offensive.

template <typename Scalar>
Var<Scalar> classify(Graph<Scalar>& g, Var<Scalar> fused, DenseParams<Scalar>& head) {
  if (fused.cols() != head.weight.rows()) {
    throw DimensionError("classify: fused width " + std::to_string(fused.cols()) +
                         " does not match head " + to_string(head.weight.shape()));
  }
  return softmax(dense(g, fused, head));
}

/// Argmax over the two class probabilities; ties resolve to class 0.
template <typename Derived>
int predicted_class(const Eigen::MatrixBase<Derived>& probs) {
  return probs(0, 1) > probs(0, 0) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Baseline heads.

/// Additive self-attention pooling over stacked modality vectors:
/// s_i = v^T tanh(x_i W + q), weights = softmax(s), pooled = sum_i w_i x_i.
template <typename Scalar>
struct AttentionPoolParams {
  Tensor<Scalar> weight;  // [h, a]
  Tensor<Scalar> query;   // [a]
  Tensor<Scalar> score_vector;  // [a, 1]

  AttentionPoolParams() = default;
  AttentionPoolParams(Index width, Index attention_dim)
      : weight(Shape{width, attention_dim}, true),
        query(Shape{attention_dim}, true),
        score_vector(Shape{attention_dim, 1}, true) {}

  void initialize(Rng& rng) {
    const Index a = score_vector.shape()[0];
    glorot_uniform(weight, weight.shape()[0], a, rng);
    query.data().setZero();
    glorot_uniform(score_vector, a, 1, rng);
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".query", query);
    fn(prefix + ".score_vector", score_vector);
  }
};

template <typename Scalar>
struct BaselineParams {
  DenseParams<Scalar> visual_dense;  // early, attentive
  DenseParams<Scalar> text_dense;    // early, attentive
  AttentionPoolParams<Scalar> pool;  // attentive
  DenseParams<Scalar> visual_head;   // late
  DenseParams<Scalar> text_head;     // late
};

template <typename Scalar>
struct BaselineOutput {
  Var<Scalar> fused;  // representation fed to the shared classifier (unset for late)
  Var<Scalar> probs;  // [1, 2]
};

template <typename Scalar>
Var<Scalar> attention_pool(Graph<Scalar>& g, Var<Scalar> sequence, AttentionPoolParams<Scalar>& p) {
  Var<Scalar> hidden =
      tanh(add(matmul(sequence, g.parameter(p.weight)), g.parameter(p.query)));
  Var<Scalar> weights = softmax(transpose(matmul(hidden, g.parameter(p.score_vector))));
  return matmul(weights, sequence);
}

/// early:     dense(100)+ReLU per modality, concatenate, classify.
/// late:      per-modality softmax classifiers, probabilities averaged.
/// attentive: dense(100)+ReLU per modality, stacked as a 2-row sequence,
///            attention-pooled, classify.
template <typename Scalar>
BaselineOutput<Scalar> baseline_fuse(Graph<Scalar>& g, FusionKind kind, Var<Scalar> visual,
                                     Var<Scalar> sentence, BaselineParams<Scalar>& p,
                                     DenseParams<Scalar>* head) {
  BaselineOutput<Scalar> out;
  switch (kind) {
    case FusionKind::kEarly: {
      Var<Scalar> v = relu(dense(g, visual, p.visual_dense));
      Var<Scalar> t = relu(dense(g, sentence, p.text_dense));
      out.fused = concat<Scalar>({v, t});
      out.probs = classify(g, out.fused, *head);
      return out;
    }
    case FusionKind::kLate: {
      Var<Scalar> pv = softmax(dense(g, visual, p.visual_head));
      Var<Scalar> pt = softmax(dense(g, sentence, p.text_head));
      out.probs = scale(add(pv, pt), Scalar(0.5));
      return out;
    }
    case FusionKind::kAttentive: {
      Var<Scalar> v = relu(dense(g, visual, p.visual_dense));
      Var<Scalar> t = relu(dense(g, sentence, p.text_dense));
      out.fused = attention_pool(g, stack_rows<Scalar>({v, t}), p.pool);
      out.probs = classify(g, out.fused, *head);
      return out;
    }
    default: break;
  }
  throw ConfigError("baseline_fuse: '" + std::string(to_string(kind)) + "' is not a baseline head");
}

}  // namespace fusionet
