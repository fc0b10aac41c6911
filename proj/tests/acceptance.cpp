// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Run a subset with `acceptance 3 7`.

#include "fusionet/checkpoint.hpp"
#include "fusionet/data.hpp"
#include "fusionet/loss.hpp"
#include "fusionet/metrics.hpp"
#include "fusionet/model.hpp"
#include "fusionet/training.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

#include <json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

using namespace fusionet;
using namespace fusionet::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::path(FUSIONET_TEST_TMP) / "acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(FUSIONET_CLI_PATH) + " -q " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_probability(const json& v) { return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0; }

bool valid_report(const json& r) {
  for (const char* key : {"precision", "recall", "weighted_f1", "mr_combined", "accuracy"}) {
    if (!r.contains(key) || !is_probability(r[key])) return false;
  }
  for (const char* key : {"auc", "mr_class0", "mr_class1"}) {
    if (!r.contains(key) || !(r[key].is_null() || is_probability(r[key]))) return false;
  }
  return r.contains("samples") && r["samples"].is_number_unsigned();
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  Outcome out;
  const ModelDims dims = tiny_dims();
  Model<double> model(dims, FusionKind::kMcaScf);
  model.initialize(21);
  Rng rng(22);
  const Tensor<double> image = random_image<double>(dims.image_size, rng);
  const std::vector<int> ids = {2, 3, 0};
  std::vector<Tensor<double>*> params;
  for (auto& [name, t] : model.parameters()) params.push_back(t);
  const auto r = check_gradients<double>(params, [&](Graph<double>& g) {
    return cross_entropy(model.forward(g, image, ids).probs, 1);
  });
  out.require(r.max_relative_error < 1e-4, "worst " + r.worst);
  out.detail = "max relative error " + fmt(r.max_relative_error) + " over " + std::to_string(r.checked) +
               " entries" + (out.pass ? "" : "; " + out.detail);
  return out;
}

Outcome dimensional_contract() {
  Outcome out;
  const ModelDims dims;
  const Index d = dims.visual_dim;
  out.require(d == 100 && dims.text_dim() == 2 * dims.hidden && dims.text_dim() == d, "d != 2N != 100");
  Rng rng(5);
  ModelDims small = dims;
  small.vocab_size = 6;
  const Tensor<float> image = random_image<float>(dims.image_size, rng);
  const std::vector<int> ids = random_ids(dims.seq_len, small.vocab_size, rng);
  const std::map<FusionKind, Index> expected = {
      {FusionKind::kMcaScf, 4 * d}, {FusionKind::kVgcf, 2 * d}, {FusionKind::kTgcf, 2 * d}, {FusionKind::kMcf, 2 * d}};
  for (const auto& [kind, width] : expected) {
    Model<float> model(small, kind);
    model.initialize(1);
    Graph<float> g;
    const auto fwd = model.forward(g, image, ids);
    const Index got = fwd.fused.value().cols();
    out.require(got == width && fused_width(kind, small) == width && model.head_params()->weight.shape()[0] == width,
                std::string(to_string(kind)) + " width " + std::to_string(got));
  }
  if (out.pass) out.detail = "widths 400/200/200/200 with d = 2N = 100";
  return out;
}

Outcome eq6_identity() {
  Outcome out;
  ModelDims dims;
  dims.vocab_size = 50;
  Model<float> model(dims, FusionKind::kMcaScf);
  Rng rng(6);
  double worst = 0.0;
  for (int pass = 0; pass < 100; ++pass) {
    if (pass % 10 == 0) model.initialize(100 + pass);
    const Tensor<float> image = random_image<float>(dims.image_size, rng);
    std::vector<int> ids = random_ids(dims.seq_len, dims.vocab_size, rng);
    // Vary caption length with post-padding.
    std::fill(ids.begin() + static_cast<long>(rng.below(ids.size())), ids.end(), Vocabulary::kPad);
    Graph<float> g;
    const auto fwd = model.forward(g, image, ids);
    worst = std::max(worst, static_cast<double>((fwd.context.visual.value() - fwd.visual.value()).cwiseAbs().maxCoeff()));
  }
  out.require(worst < 1e-6, "too large");
  out.detail = "max |C_v - V_f| = " + fmt(worst) + " over 100 passes";
  return out;
}

Outcome attention_invariants() {
  Outcome out;
  Rng rng(7);
  int sums = 0, nonneg = 0, shifts = 0, perms = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const Index d = 1 + static_cast<Index>(rng.below(12)), w = 1 + static_cast<Index>(rng.below(12));
    const Index a = 1 + static_cast<Index>(rng.below(8)), l = 1 + static_cast<Index>(rng.below(60));
    AlignmentParams<double> p(d, w, a);
    p.initialize(rng);
    const double spread = rng.uniform(0.1, 20.0);
    fill_uniform(p.score_vector, rng, -spread, spread);
    Tensor<double> vf(Shape{1, d}), words(Shape{l, w});
    fill_uniform(vf, rng, -3, 3);
    fill_uniform(words, rng, -3, 3);

    Graph<double> g;
    const auto aw = align(g, g.input(vf), g.input(words), p);
    const Matrix<double> alpha = aw.alpha.value();
    sums += std::abs(alpha.sum() - 1.0) <= 1e-6;
    nonneg += alpha.minCoeff() >= 0.0;

    const double c = rng.uniform(-50, 50);
    const auto shifted = softmax(add(aw.scores, g.constant(Matrix<double>::Constant(1, 1, c))));
    shifts += (shifted.value() - alpha).cwiseAbs().maxCoeff() <= 1e-12;

    std::vector<Index> order(static_cast<std::size_t>(l));
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = l - 1; i > 0; --i) {
      std::swap(order[static_cast<std::size_t>(i)], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    }
    Tensor<double> permuted(words.shape());
    for (Index i = 0; i < l; ++i) permuted.data().row(i) = words.data().row(order[static_cast<std::size_t>(i)]);
    const auto pw = align(g, g.input(vf), g.input(permuted), p);
    double diff = 0.0;
    for (Index i = 0; i < l; ++i) {
      diff = std::max(diff, std::abs(pw.alpha.value()(0, i) - alpha(0, order[static_cast<std::size_t>(i)])));
    }
    perms += diff <= 1e-12;
  }
  out.require(sums == trials, "sum-to-one failed");
  out.require(nonneg == trials, "negative weight");
  out.require(shifts == trials, "shift changed alpha");
  out.require(perms == trials, "permutation not equivariant");
  out.detail = "sum " + std::to_string(sums) + "/200, nonneg " + std::to_string(nonneg) + "/200, shift " +
               std::to_string(shifts) + "/200, permutation " + std::to_string(perms) + "/200" +
               (out.pass ? "" : "; " + out.detail);
  return out;
}

// The XOR dataset and the training recipe used to check that fusion is functional.
struct XorRun {
  double train_accuracy = 0.0;  // last epoch
  std::size_t reached_at = 0;   // first epoch at or above 0.95, 0 if never
  std::size_t epochs = 0;
  EvalReport test;
};

XorRun train_xor(FusionKind kind, const std::vector<MemeSample>& samples, const Vocabulary& vocab,
                 std::size_t max_epochs, const TrainConfig& base) {
  TrainConfig config = base;
  config.fusion = kind;
  Trainer trainer(config, samples, vocab);
  XorRun run;
  while (trainer.epochs_run() < max_epochs) {
    const EpochLog& entry = trainer.run_epoch();
    run.train_accuracy = entry.train_accuracy;
    if (entry.train_accuracy >= 0.95) {
      run.reached_at = entry.epoch;
      break;
    }
  }
  run.epochs = trainer.epochs_run();
  Model<float> best = model_from_checkpoint(trainer.best_checkpoint());
  run.test = report_from(predict(best, samples, split_indices(samples, Split::kTest)));
  return run;
}

Outcome functional_fusion() {
  Outcome out;
  const fs::path dir = work_dir("xor");
  SyntheticOptions options;
  options.n = 256;
  options.seed = 7;
  const SyntheticSummary summary = generate_synthetic(dir / "data", options);

  // Images stay 150x150 on disk; the model sees them resized to 32 px so the
  // fused run and both unimodal runs fit the time budget on one core.
  TrainConfig config;
  config.seed = 7;
  config.dims.image_size = 32;
  // With plain Glorot the alignment starts in tanh's linear range, where the
  // image term cancels in the softmax and the XOR interaction has no gradient.
  config.dims.alignment_gain = 30.0;
  ManifestOptions load;
  load.image_size = config.dims.image_size;
  Dataset data = load_manifest(summary.manifest, load);
  const Vocabulary vocab = build_vocabulary(data.samples, config.min_token_count);
  assign_token_ids(data.samples, vocab, config.dims.seq_len);

  const std::size_t max_epochs = 200;
  const XorRun fused = train_xor(FusionKind::kMcaScf, data.samples, vocab, max_epochs, config);
  // Unimodal heads get exactly the fused run's epoch count.
  const XorRun text = train_xor(FusionKind::kTextOnly, data.samples, vocab, fused.epochs, config);
  const XorRun image = train_xor(FusionKind::kImageOnly, data.samples, vocab, fused.epochs, config);

  out.require(fused.reached_at > 0 && fused.reached_at <= max_epochs, "train accuracy never reached 0.95");
  out.require(fused.test.weighted_f1 >= 0.85, "test WF below 0.85");
  out.require(text.test.accuracy <= 0.70, "text-only above 0.70");
  out.require(image.test.accuracy <= 0.70, "image-only above 0.70");
  out.detail = "mca_scf train acc >= 0.95 at epoch " + std::to_string(fused.reached_at) + " (" +
               fmt(fused.train_accuracy) + "), test WF " + fmt(fused.test.weighted_f1) + "; text-only test acc " +
               fmt(text.test.accuracy) + "; image-only test acc " + fmt(image.test.accuracy) +
               (out.pass ? "" : "; " + out.detail);
  return out;
}

// Brute-force oracles written independently of the metrics module.
double oracle_auc(const std::vector<int>& y, const std::vector<double>& s) {
  double concordant = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        ++pairs;
        concordant += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return concordant / static_cast<double>(pairs);
}

std::array<double, 3> oracle_prf(const std::vector<int>& y, const std::vector<int>& p) {
  double precision = 0, recall = 0, f1 = 0;
  for (int c = 0; c < 2; ++c) {
    double tp = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      tp += y[i] == c && p[i] == c;
      predicted += p[i] == c;
      actual += y[i] == c;
    }
    const double pc = predicted > 0 ? tp / predicted : 0.0;
    const double rc = actual > 0 ? tp / actual : 0.0;
    const double fc = pc + rc > 0 ? 2 * pc * rc / (pc + rc) : 0.0;
    const double weight = actual / static_cast<double>(y.size());
    precision += weight * pc;
    recall += weight * rc;
    f1 += weight * fc;
  }
  return {precision, recall, f1};
}

Outcome metric_oracles() {
  Outcome out;
  Rng rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<int> y(n), p(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      p[i] = static_cast<int>(rng.below(2));
      s[i] = static_cast<double>(rng.below(8)) / 8.0;  // coarse grid forces ties
    }
    y[0] = 0;
    y[1] = 1;
    const PrfResult r = weighted_prf(y, p);
    const auto o = oracle_prf(y, p);
    worst = std::max({worst, std::abs(r.precision - o[0]), std::abs(r.recall - o[1]), std::abs(r.weighted_f1 - o[2]),
                      std::abs(roc_auc(y, s) - oracle_auc(y, s))});
  }
  const std::vector<int> labels = {0, 0, 1, 1};
  const std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
  const double example = roc_auc(labels, scores);
  out.require(worst <= 1e-9, "oracle mismatch");
  out.require(example == 0.75, "AUC example gave " + fmt(example, 17));
  out.detail = "max deviation " + fmt(worst) + " over 1000 instances; AUC example " + fmt(example, 17) +
               (out.pass ? "" : "; " + out.detail);
  return out;
}

Outcome recovery_vs_published() {
  Outcome out;
  const F1Grid grid = {{{"MUTE", "MUTE"}, 0.697},     {{"MultiOFF", "MultiOFF"}, 0.703},
                       {{"MUTE", "MultiOFF"}, 0.585}, {{"MultiOFF", "MUTE"}, 0.527},
                       {{"MT+MO", "MUTE"}, 0.604},    {{"MT+MO", "MultiOFF"}, 0.627}};
  const RecoveryReport r = recovery_ratio(grid);
  const std::vector<std::tuple<std::string, std::string, double>> printed = {
      {"MUTE", "MultiOFF", 84}, {"MultiOFF", "MUTE", 75}, {"MT+MO", "MUTE", 86}, {"MT+MO", "MultiOFF", 90}};
  for (const auto& [source, target, percent] : printed) {
    const double got = r.at(source, target).percent;
    out.detail += (out.detail.empty() ? "" : ", ") + source + "->" + target + " " + fmt(got) + "% vs " +
                  fmt(percent) + "% (diff " + fmt(got - percent, 2) + "pp)";
    if (std::abs(got - percent) > 1.5) out.pass = false;
  }
  return out;
}

Outcome misclassification_bookkeeping() {
  Outcome out;
  Rng rng(10);
  int agree = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(100);
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      p[i] = static_cast<int>(rng.below(2));
    }
    const MisclassificationRates mr = misclassification_rates(confusion_matrix(y, p));
    double wrong[2] = {0, 0}, seen[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      seen[y[i]] += 1;
      wrong[y[i]] += y[i] != p[i];
    }
    bool ok = std::abs(mr.combined - (wrong[0] + wrong[1]) / static_cast<double>(n)) < 1e-12;
    for (int c = 0; c < 2; ++c) {
      const std::optional<double>& rate = c == 0 ? mr.class0 : mr.class1;
      ok = ok && (seen[c] == 0 ? !rate.has_value() : rate && std::abs(*rate - wrong[c] / seen[c]) < 1e-12);
    }
    agree += ok;
  }
  // 60 errors in 200 samples.
  ConfusionMatrix cm;
  cm.counts = {{{90, 30}, {30, 50}}};
  const double combined = misclassification_rates(cm).combined;
  out.require(agree == 500, "direct counting disagreed");
  out.require(std::abs(combined - 0.30) < 1e-12, "combined rate " + fmt(combined));
  out.detail = "direct counting agrees on " + std::to_string(agree) + "/500 matrices; constructed matrix gives " +
               fmt(combined) + (out.pass ? "" : "; " + out.detail);
  return out;
}

Outcome determinism() {
  Outcome out;
  const fs::path dir = work_dir("determinism");
  out.require(run_cli("synth --n 64 --seed 7 --out " + (dir / "data").string(), dir / "synth.log") == 0, "synth failed");
  const std::string train = "train --data " + (dir / "data" / "manifest.jsonl").string() + " --epochs 3 --seed 7 --out ";
  for (const char* run : {"a", "b"}) {
    out.require(run_cli(train + (dir / run).string(), dir / (std::string(run) + ".log")) == 0,
                std::string("train ") + run + " failed");
  }
  if (!out.pass) return out;
  std::size_t compared = 0;
  for (const char* file : {"checkpoint.fnet", "train_log.jsonl", "train_summary.json", "test_report.json"}) {
    const std::string a = read_bytes(dir / "a" / file), b = read_bytes(dir / "b" / file);
    out.require(!a.empty() && a == b, std::string(file) + " differs");
    ++compared;
  }
  json ma = read_json(dir / "a" / "run_manifest.json"), mb = read_json(dir / "b" / "run_manifest.json");
  for (json* m : {&ma, &mb}) {
    m->erase("timings");
    m->erase("output_dir");
  }
  out.require(ma == mb, "run manifests differ beyond timestamps and paths");
  if (out.pass) out.detail = std::to_string(compared) + " artifacts and the run manifest are identical";
  return out;
}

Outcome checkpoint_round_trip() {
  Outcome out;
  ModelDims dims;
  dims.vocab_size = 30;
  Model<float> model(dims, FusionKind::kMcaScf);
  model.initialize(3);
  const fs::path dir = work_dir("checkpoint");
  const fs::path path = dir / "model.fnet";
  save_checkpoint(path, capture(model, json{{"note", "acceptance"}}));
  Model<float> loaded(dims, FusionKind::kMcaScf);
  restore(loaded, load_checkpoint(path));

  Rng rng(4);
  int identical = 0;
  for (int probe = 0; probe < 10; ++probe) {
    const Tensor<float> image = random_image<float>(dims.image_size, rng);
    const std::vector<int> ids = random_ids(dims.seq_len, dims.vocab_size, rng);
    Graph<float> g1, g2;
    const Matrix<float> a = model.forward(g1, image, ids).probs.value();
    const Matrix<float> b = loaded.forward(g2, image, ids).probs.value();
    identical += std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
  }
  out.require(identical == 10, "forward differs after reload");

  std::string bytes = read_bytes(path);
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
  std::ofstream(dir / "flipped.fnet", std::ios::binary) << bytes;
  bool corrupt = false;
  try {
    load_checkpoint(dir / "flipped.fnet");
  } catch (const CorruptCheckpoint&) {
    corrupt = true;
  }
  out.require(corrupt, "bit flip not detected");

  bool truncated = false;
  std::ofstream(dir / "short.fnet", std::ios::binary) << read_bytes(path).substr(0, 100);
  try {
    load_checkpoint(dir / "short.fnet");
  } catch (const CorruptCheckpoint&) {
    truncated = true;
  }
  out.require(truncated, "truncation not detected");

  ModelDims narrow = dims;
  narrow.visual_dim = 64;
  Model<float> other(narrow, FusionKind::kMcaScf);
  bool mismatch = false;
  try {
    restore(other, load_checkpoint(path));
  } catch (const CheckpointMismatch&) {
    mismatch = true;
  }
  out.require(mismatch, "width mismatch not detected");
  out.detail = std::to_string(identical) + "/10 probes bitwise identical; corruption, truncation and width mismatch " +
               (corrupt && truncated && mismatch ? "rejected" : "NOT all rejected");
  return out;
}

Outcome end_to_end_cli() {
  Outcome out;
  const fs::path dir = work_dir("cli");
  const fs::path log = dir / "cli.log";
  auto step = [&](const std::string& name, const std::string& args) {
    const int code = run_cli(args, log);
    out.require(code == 0, name + " exited " + std::to_string(code) + ": " + read_bytes(log));
    return code == 0;
  };
  const fs::path a = dir / "A" / "manifest.jsonl", b = dir / "B" / "manifest.jsonl";
  const std::string quick = " --epochs 2";
  if (!step("synth", "synth --n 64 --seed 1 --out " + (dir / "A").string()) ||
      !step("synth", "synth --n 64 --seed 2 --triggers gamma,delta --out " + (dir / "B").string()) ||
      !step("train", "train --data " + a.string() + quick + " --out " + (dir / "train").string()) ||
      !step("eval", "eval --checkpoint " + (dir / "train" / "checkpoint.fnet").string() + " --data " + a.string() +
                        " --split test --out " + (dir / "eval").string()) ||
      !step("ablate", "ablate --data " + a.string() + quick + " --seeds 2 --out " + (dir / "ablate").string()) ||
      !step("train", "train --data " + b.string() + quick + " --out " + (dir / "trainB").string()) ||
      !step("crossdomain", "crossdomain --source " + a.string() + " --target " + b.string() + " --baseline " +
                               (dir / "trainB").string() + quick + " --out " + (dir / "cross").string())) {
    return out;
  }

  out.require(valid_report(read_json(dir / "train" / "test_report.json")), "train test_report schema");
  const json ev = read_json(dir / "eval" / "eval_report.json");
  out.require(ev["split"] == "test" && valid_report(ev["report"]), "eval_report schema");
  const json agg = read_json(dir / "ablate" / "aggregate.json");
  out.require(agg["kinds"].size() == kAblationKinds.size(), "ablation kinds");
  for (FusionKind kind : kAblationKinds) {
    const json& k = agg["kinds"][std::string(to_string(kind))];
    out.require(k["seeds"].size() == 2 && valid_report(k) &&
                    k["std"].contains("weighted_f1"),
                std::string("aggregate schema for ") + std::string(to_string(kind)));
  }
  const json cross = read_json(dir / "cross" / "crossdomain_report.json");
  out.require(is_probability(cross["f1_target_target"]) && is_probability(cross["f1_source_target"]) &&
                  cross["recovery_ratio"].is_number() && cross["recovery"]["entries"].is_array(),
              "crossdomain schema");
  for (const char* sub : {"train", "eval", "ablate", "cross"}) {
    const json m = read_json(dir / sub / "run_manifest.json");
    out.require(m["status"] == "ok" && m.contains("config") && m.contains("timings"),
                std::string(sub) + " run manifest");
  }
  if (out.pass) out.detail = "synth, train, eval, ablate (7 kinds x 2 seeds) and crossdomain all exited 0 with valid reports";
  return out;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient integrity", 30, gradient_integrity},
      {2, "dimensional contract", 1, dimensional_contract},
      {3, "C_v equals V_f", 5, eq6_identity},
      {4, "attention invariants", 10, attention_invariants},
      {5, "functional fusion on XOR", 300, functional_fusion},
      {6, "metric oracles", 10, metric_oracles},
      {7, "recovery ratio vs published table", 1, recovery_vs_published},
      {8, "misclassification-rate bookkeeping", 1, misclassification_bookkeeping},
      {9, "determinism", 120, determinism},
      {10, "checkpoint round trip", 10, checkpoint_round_trip},
      {11, "end-to-end CLI", 600, end_to_end_cli},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > c.budget_seconds) {
      outcome.pass = false;
      outcome.detail += "; over the " + fmt(c.budget_seconds) + " s budget";
    }
    failures += !outcome.pass;
    std::printf("%s criterion %d (%s) [%.1f s]: %s\n", outcome.pass ? "PASS" : "FAIL", c.id, c.name, seconds,
                outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
