#include "doctest.h"

#include "fusionet/loss.hpp"
#include "fusionet/model.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace fusionet;
using namespace fusionet::testing;

namespace {

Tensor<double> random_rows(Index rows, Index cols, Rng& rng) {
  Tensor<double> t(Shape{rows, cols});
  fill_uniform(t, rng);
  return t;
}

std::vector<Index> random_permutation(Index n, Rng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    std::swap(p[static_cast<std::size_t>(i)], p[rng.below(static_cast<std::uint64_t>(i + 1))]);
  }
  return p;
}

Tensor<double> permute_rows(const Tensor<double>& t, const std::vector<Index>& order) {
  Tensor<double> out(t.shape());
  for (Index i = 0; i < t.rows(); ++i) out.data().row(i) = t.data().row(order[static_cast<std::size_t>(i)]);
  return out;
}

// Direct evaluation of v_a^T tanh(W1 V_f + W2 h_j) with scalar loops.
double direct_score(const AlignmentParams<double>& p, const Matrix<double>& vf, const Matrix<double>& h) {
  const Index a = p.score_vector.rows();
  double score = 0.0;
  for (Index k = 0; k < a; ++k) {
    double pre = 0.0;
    for (Index i = 0; i < vf.cols(); ++i) pre += p.visual_weight.data()(i, k) * vf(0, i);
    for (Index i = 0; i < h.cols(); ++i) pre += p.text_weight.data()(i, k) * h(0, i);
    score += p.score_vector.data()(k, 0) * std::tanh(pre);
  }
  return score;
}

}  // namespace

TEST_CASE("align") {
  Rng rng(1);
  const Index d = 100, t = 100, l = 60;
  AlignmentParams<double> p(d, t, 100);
  p.initialize(rng);
  Tensor<double> vf = random_rows(1, d, rng);
  Tensor<double> words = random_rows(l, t, rng);

  SUBCASE("zero score vector gives uniform weights") {
    p.score_vector.data().setZero();
    Graph<double> g;
    auto w = align(g, g.input(vf), g.input(words), p);
    CHECK(w.scores.value().cwiseAbs().maxCoeff() == 0.0);
    for (Index j = 0; j < l; ++j) CHECK(w.alpha.value()(0, j) == doctest::Approx(1.0 / 60.0));
  }
  SUBCASE("permuting word features permutes alpha") {
    auto order = random_permutation(l, rng);
    Tensor<double> permuted = permute_rows(words, order);
    Graph<double> g;
    auto a = align(g, g.input(vf), g.input(words), p);
    auto b = align(g, g.input(vf), g.input(permuted), p);
    for (Index j = 0; j < l; ++j) {
      CHECK(b.alpha.value()(0, j) == doctest::Approx(a.alpha.value()(0, order[static_cast<std::size_t>(j)])).epsilon(1e-12));
    }
  }
  SUBCASE("one-hot construction selects the activating position") {
    // Words are one-hot rows; W2 maps only coordinate 7 to a large hidden
    // activation, so only positions holding e_7 score highly.
    AlignmentParams<double> q(4, 10, 3);
    q.visual_weight.data().setConstant(0.1);
    q.text_weight.data().setZero();
    q.text_weight.data().row(7).setConstant(3.0);
    q.score_vector.data().setOnes();
    Tensor<double> v(Shape{1, 4});
    v.data().setConstant(0.5);
    Tensor<double> h(Shape{12, 10});
    for (Index j = 0; j < 12; ++j) h.data()(j, j % 7) = 1.0;  // never coordinate 7
    const Index star = 5;
    h.data().row(star).setZero();
    h.data()(star, 7) = 1.0;
    Graph<double> g;
    auto w = align(g, g.input(v), g.input(h), q);
    std::vector<double> oracle;
    for (Index j = 0; j < 12; ++j) oracle.push_back(direct_score(q, v.data(), h.data().row(j)));
    for (Index j = 0; j < 12; ++j) {
      CHECK(w.scores.value()(0, j) == doctest::Approx(oracle[static_cast<std::size_t>(j)]).epsilon(1e-12));
      if (j != star) CHECK(w.alpha.value()(0, star) > w.alpha.value()(0, j));
    }
    const double z = std::accumulate(oracle.begin(), oracle.end(), 0.0,
                                     [](double acc, double s) { return acc + std::exp(s); });
    CHECK(w.alpha.value()(0, star) == doctest::Approx(std::exp(oracle[star]) / z).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch names the operand") {
    Tensor<double> short_vf = random_rows(1, d - 1, rng);
    Graph<double> g;
    try {
      align(g, g.input(short_vf), g.input(words), p);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("visual") != std::string::npos);
    }
    Tensor<double> narrow = random_rows(l, t - 2, rng);
    try {
      align(g, g.input(vf), g.input(narrow), p);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("word") != std::string::npos);
    }
  }
  SUBCASE("normalization in 32-bit") {
    AlignmentParams<float> pf(d, t, 100);
    Rng r2(2);
    pf.initialize(r2);
    Tensor<float> vff = vf.cast<float>(), wf = words.cast<float>();
    Graph<float> g;
    auto w = align(g, g.input(vff), g.input(wf), pf);
    CHECK(w.alpha.value().minCoeff() >= 0.0f);
    CHECK(std::abs(w.alpha.value().sum() - 1.0f) < 1e-6f);
  }
}

TEST_CASE("context_vectors") {
  Rng rng(3);
  const Index l = 60;
  Tensor<double> vf = random_rows(1, 100, rng);
  Tensor<double> words = random_rows(l, 100, rng);
  Graph<double> g;
  SUBCASE("C_v equals V_f for any normalized alpha") {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor<double> raw = random_rows(1, l, rng);
      auto alpha = softmax(g.constant(Matrix<double>(raw.data() * 5.0)));
      auto ctx = context_vectors(alpha, g.input(vf), g.input(words));
      CHECK((ctx.visual.value() - vf.data()).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  SUBCASE("one-hot alpha picks that word") {
    Matrix<double> one_hot = Matrix<double>::Zero(1, l);
    one_hot(0, 17) = 1.0;
    auto ctx = context_vectors(g.constant(one_hot), g.input(vf), g.input(words));
    CHECK(ctx.text.value() == words.data().row(17));
  }
  SUBCASE("uniform alpha averages the words") {
    auto ctx = context_vectors(g.constant(Matrix<double>::Constant(1, l, 1.0 / l)), g.input(vf), g.input(words));
    Matrix<double> mean = Matrix<double>::Zero(1, 100);
    for (Index j = 0; j < l; ++j) mean += words.data().row(j);
    mean /= static_cast<double>(l);
    CHECK((ctx.text.value() - mean).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("C_t lies in the convex hull: bounded coordinatewise by the words") {
    auto alpha = softmax(g.constant(random_rows(1, l, rng).data()));
    auto ctx = context_vectors(alpha, g.input(vf), g.input(words));
    for (Index c = 0; c < 100; ++c) {
      CHECK(ctx.text.value()(0, c) <= words.data().col(c).maxCoeff() + 1e-12);
      CHECK(ctx.text.value()(0, c) >= words.data().col(c).minCoeff() - 1e-12);
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(context_vectors(g.constant(Matrix<double>::Constant(1, l - 1, 0.1)), g.input(vf), g.input(words)),
                    DimensionError);
  }
}

TEST_CASE("fuse widths and layout") {
  ModelDims dims;  // d = 2N = 100
  CHECK(fused_width(FusionKind::kMcaScf, dims) == 400);
  CHECK(fused_width(FusionKind::kVgcf, dims) == 200);
  CHECK(fused_width(FusionKind::kTgcf, dims) == 200);
  CHECK(fused_width(FusionKind::kMcf, dims) == 200);
  CHECK(fused_width(FusionKind::kEarly, dims) == 200);

  Rng rng(4);
  Tensor<double> cv = random_rows(1, 100, rng), ct = random_rows(1, 100, rng);
  Tensor<double> vf = random_rows(1, 100, rng), hl = random_rows(1, 100, rng);
  Graph<double> g;
  ContextVectors<double> ctx{g.input(cv), g.input(ct)};
  auto m = fuse(FusionKind::kMcaScf, ctx, g.input(vf), g.input(hl));
  CHECK(m.shape() == Shape{1, 400});
  CHECK(slice_cols(m, 0, 100).value() == cv.data());
  CHECK(slice_cols(m, 100, 100).value() == ct.data());
  CHECK(slice_cols(m, 200, 100).value() == vf.data());
  CHECK(slice_cols(m, 300, 100).value() == hl.data());

  auto vg = fuse(FusionKind::kVgcf, ctx, g.input(vf), g.input(hl));
  CHECK(slice_cols(vg, 0, 100).value() == cv.data());
  CHECK(slice_cols(vg, 100, 100).value() == hl.data());
  auto tg = fuse(FusionKind::kTgcf, ctx, g.input(vf), g.input(hl));
  CHECK(slice_cols(tg, 0, 100).value() == ct.data());
  CHECK(slice_cols(tg, 100, 100).value() == vf.data());
  auto mc = fuse(FusionKind::kMcf, ctx, g.input(vf), g.input(hl));
  CHECK(slice_cols(mc, 0, 100).value() == cv.data());
  CHECK(slice_cols(mc, 100, 100).value() == ct.data());

  CHECK_THROWS_AS(fuse(FusionKind::kEarly, ctx, g.input(vf), g.input(hl)), ConfigError);
  CHECK_THROWS_AS(parse_fusion_kind("bogus"), ConfigError);
  for (FusionKind k : kAllFusionKinds) CHECK(parse_fusion_kind(to_string(k)) == k);
}

TEST_CASE("baseline heads") {
  ModelDims dims;
  Rng rng(5);
  Tensor<double> vf = random_rows(1, 100, rng), hl = random_rows(1, 100, rng);
  SUBCASE("early fusion width before the classifier is 200") {
    Model<double> model(dims, FusionKind::kEarly);
    model.initialize(1);
    Graph<double> g;
    auto out = baseline_fuse(g, FusionKind::kEarly, g.input(vf), g.input(hl), model.baseline_params(),
                             model.head_params());
    CHECK(out.fused.shape() == Shape{1, 200});
    CHECK(out.probs.value().sum() == doctest::Approx(1.0));
  }
  SUBCASE("late fusion of identical per-modality scores returns them") {
    BaselineParams<double> p;
    p.visual_head = DenseParams<double>(100, 2);
    p.text_head = DenseParams<double>(100, 2);
    p.visual_head.bias.data() << 0.3, -0.4;
    p.text_head.bias.data() << 0.3, -0.4;  // zero weights: both branches give softmax(bias)
    Graph<double> g;
    auto out = baseline_fuse(g, FusionKind::kLate, g.input(vf), g.input(hl), p, static_cast<DenseParams<double>*>(nullptr));
    auto single = softmax(g.constant(p.visual_head.bias.data()));
    CHECK((out.probs.value() - single.value()).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("attentive pooling with zero attention parameters is the branch mean") {
    Model<double> model(dims, FusionKind::kAttentive);
    model.initialize(2);
    auto& p = model.baseline_params();
    p.pool.weight.data().setZero();
    p.pool.query.data().setZero();
    p.pool.score_vector.data().setZero();
    Graph<double> g;
    auto out = baseline_fuse(g, FusionKind::kAttentive, g.input(vf), g.input(hl), p, model.head_params());
    // Direct evaluation of both dense branches and their average.
    auto branch = [](const DenseParams<double>& dp, const Matrix<double>& x) {
      Matrix<double> y = x * dp.weight.data() + dp.bias.data();
      return Matrix<double>(y.cwiseMax(0.0));
    };
    Matrix<double> mean = 0.5 * (branch(p.visual_dense, vf.data()) + branch(p.text_dense, hl.data()));
    CHECK((out.fused.value() - mean).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("classify") {
  SUBCASE("zero head gives even odds") {
    DenseParams<double> head(400, 2);
    Tensor<double> x(Shape{1, 400});
    Rng rng(6);
    fill_uniform(x, rng);
    Graph<double> g;
    auto probs = classify(g, g.input(x), head);
    CHECK(probs.value()(0, 0) == 0.5);
    CHECK(probs.value()(0, 1) == 0.5);
    CHECK(predicted_class(probs.value()) == 0);
  }
  SUBCASE("ties resolve to class 0") {
    Matrix<double> p(1, 2);
    p << 0.5, 0.5;
    CHECK(predicted_class(p) == 0);
    p << 0.4, 0.6;
    CHECK(predicted_class(p) == 1);
  }
  SUBCASE("end-to-end probabilities sum to one") {
    ModelDims dims = tiny_dims();
    dims.image_size = 16;
    Model<float> model(dims, FusionKind::kMcaScf);
    model.initialize(7);
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
      Tensor<float> image = random_image<float>(16, rng);
      auto ids = random_ids(dims.seq_len, dims.vocab_size, rng);
      Graph<float> g;
      auto out = model.forward(g, image, ids);
      CHECK(std::abs(out.probs.value().sum() - 1.0f) < 1e-6f);
      CHECK(out.probs.value().minCoeff() >= 0.0f);
    }
  }
  SUBCASE("width mismatch") {
    DenseParams<double> head(200, 2);
    Graph<double> g;
    CHECK_THROWS_AS(classify(g, g.constant(Matrix<double>::Zero(1, 400)), head), DimensionError);
  }
}

TEST_CASE("fusion-head invariants") {
  Rng rng(9);
  ModelDims dims;
  dims.vocab_size = 10;
  Model<double> model(dims, FusionKind::kMcaScf);
  model.initialize(3);
  auto& ap = *model.alignment_params();
  auto& head = *model.head_params();
  Tensor<double> vf = random_rows(1, 100, rng);
  Tensor<double> words = random_rows(60, 100, rng);
  Tensor<double> hl = random_rows(1, 100, rng);

  auto run = [&](Graph<double>& g, const Tensor<double>& w, double shift) {
    auto scores = alignment_scores(g, g.input(vf), g.input(w), ap);
    auto alpha = softmax(add(scores, g.constant(Matrix<double>::Constant(1, 1, shift))));
    auto ctx = context_vectors(alpha, g.input(vf), g.input(w));
    return std::make_pair(ctx, classify(g, fuse(FusionKind::kMcaScf, ctx, g.input(vf), g.input(hl)), head));
  };
  SUBCASE("shifting scores changes nothing downstream") {
    Graph<double> g;
    auto [c0, p0] = run(g, words, 0.0);
    auto [c1, p1] = run(g, words, 37.5);
    CHECK((c0.text.value() - c1.text.value()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p0.value() - p1.value()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("permuting word features leaves C_t and the output unchanged") {
    Graph<double> g;
    Tensor<double> permuted = permute_rows(words, random_permutation(60, rng));
    auto [c0, p0] = run(g, words, 0.0);
    auto [c1, p1] = run(g, permuted, 0.0);
    CHECK((c0.text.value() - c1.text.value()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p0.value() - p1.value()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("full-model gradients match finite differences for every kind (64-bit, tiny dims)") {
  const ModelDims dims = tiny_dims();
  for (FusionKind kind : kAllFusionKinds) {
    CAPTURE(to_string(kind));
    Model<double> model(dims, kind);
    model.initialize(11);
    Rng rng(12);
    Tensor<double> image = random_image<double>(dims.image_size, rng);
    const std::vector<int> ids = {2, 3, 0};
    std::vector<Tensor<double>*> params;
    for (auto& [name, t] : model.parameters()) params.push_back(t);
    auto r = check_gradients<double>(params, [&](Graph<double>& g) {
      return cross_entropy(model.forward(g, image, ids).probs, 1);
    });
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst);
  }
}

TEST_CASE("cross_entropy") {
  Graph<double> g;
  Matrix<double> even(1, 2);
  even << 0.5, 0.5;
  CHECK(cross_entropy(g.constant(even), 0).value()(0, 0) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy(g.constant(even), 1).value()(0, 0) == doctest::Approx(0.693147).epsilon(1e-6));
  Matrix<double> certain(1, 2);
  certain << 0.0, 1.0;
  CHECK(cross_entropy(g.constant(certain), 1).value()(0, 0) == doctest::Approx(-std::log(1 - 1e-7)).epsilon(1e-9));
  CHECK(cross_entropy(g.constant(certain), 0).value()(0, 0) == doctest::Approx(-std::log(1e-7)));

  // Gradient w.r.t. logits is probs - onehot(label); compare against finite differences.
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> logits(Shape{1, 2}, true);
    fill_uniform(logits, rng, -3, 3);
    const int label = trial % 2;
    auto r = check_gradients<double>({&logits}, [&](Graph<double>& gg) {
      return cross_entropy(softmax(gg.parameter(logits)), label);
    });
    CHECK(r.max_relative_error < 1e-6);
    Graph<double> gg;
    auto probs = softmax(gg.parameter(logits));
    logits.release_grad();
    gg.backward(cross_entropy(probs, label));
    Matrix<double> expected = probs.value();
    expected(0, label) -= 1.0;
    CHECK((logits.grad() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}
