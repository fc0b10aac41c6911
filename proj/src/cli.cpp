#include "fusionet/cli.hpp"

#include "fusionet/checkpoint.hpp"
#include "fusionet/config.hpp"
#include "fusionet/data.hpp"
#include "fusionet/metrics.hpp"
#include "fusionet/training.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef FUSIONET_BUILD_ID
#define FUSIONET_BUILD_ID "unknown"
#endif

namespace fusionet::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Errors the user can fix by changing arguments or inputs; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::mutex log_mutex;
bool quiet = false;

void info(const std::string& msg) {
  if (quiet) return;
  std::lock_guard lock(log_mutex);
  std::cerr << msg << '\n';
}

void warn(const std::string& msg) {
  std::lock_guard lock(log_mutex);
  std::cerr << "warning: " << msg << '\n';
}

unsigned worker_limit() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FUSIONET_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<unsigned>(v);
  }
  return n;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + " is not valid JSON: " + e.what());
  }
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// run_manifest.json: written before work starts and finalized at the end.
/// Wall-clock data lives under "timings" so everything else is reproducible.
class RunManifest {
 public:
  RunManifest(fs::path out_dir, std::string command) : dir_(std::move(out_dir)) {
    fs::create_directories(dir_);
    doc_ = {{"command", std::move(command)}, {"build", FUSIONET_BUILD_ID}, {"status", "running"},
            {"output_dir", dir_.string()}, {"inputs", json::array()}, {"outputs", json::array()},
            {"seeds", json::array()}, {"config", json::object()}};
    doc_["timings"] = {{"started_at", utc_now()}};
    start_ = std::chrono::steady_clock::now();
    flush();
  }

  json& operator[](const char* key) { return doc_[key]; }
  void input(const fs::path& p) { doc_["inputs"].push_back(p.string()); }
  void output(const fs::path& p) { doc_["outputs"].push_back(fs::relative(p, dir_).generic_string()); }

  /// Verifies every listed output exists before declaring success.
  void finish() {
    for (const auto& o : doc_["outputs"]) {
      if (!fs::exists(dir_ / o.get<std::string>())) throw std::runtime_error("declared output missing: " + o.get<std::string>());
    }
    doc_["status"] = "ok";
    doc_["timings"]["finished_at"] = utc_now();
    doc_["timings"]["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    flush();
  }

  void fail(const std::string& why) {
    doc_["status"] = "failed";
    doc_["error"] = why;
    flush();
  }

 private:
  void flush() { write_json(dir_ / "run_manifest.json", doc_); }

  fs::path dir_;
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Shared option handling.

struct ConfigFlags {
  std::string config_file;
  std::string fusion;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::string> selection;
  bool mask_padding = false;
  std::vector<std::string> sets;

  void attach(CLI::App* app, bool with_seed = true) {
    app->add_option("--config", config_file, "Flat JSON config file")->check(CLI::ExistingFile);
    app->add_option("--fusion", fusion, "Fusion kind (" + valid_fusion_kinds() + ")");
    if (with_seed) app->add_option("--seed", seed, "Random seed");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--batch-size", batch_size, "Mini-batch size");
    app->add_option("--learning-rate", learning_rate, "Adam learning rate");
    app->add_option("--selection-metric", selection, "Checkpoint selection: accuracy or weighted_f1");
    app->add_flag("--mask-padding", mask_padding, "Exclude pad positions from the BiLSTM and attention");
    app->add_option("--set", sets, "Override any config key: KEY=VALUE (VALUE parsed as JSON)");
  }

  /// Defaults, then the config file, then flags.
  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_file.empty()) c = load_config_file(config_file, c);
    json flags = json::object();
    if (!fusion.empty()) flags["fusion"] = fusion;
    if (seed) flags["seed"] = *seed;
    if (epochs) flags["epochs"] = *epochs;
    if (batch_size) flags["batch_size"] = *batch_size;
    if (learning_rate) flags["learning_rate"] = *learning_rate;
    if (selection) flags["selection_metric"] = *selection;
    if (mask_padding) flags["mask_padding"] = true;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
      const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      json parsed = json::parse(value, nullptr, false);
      flags[key] = parsed.is_discarded() ? json(value) : parsed;
    }
    c.apply(flags);
    c.validate();
    return c;
  }
};

Dataset load_data(const fs::path& manifest, const TrainConfig& config) {
  if (!fs::is_regular_file(manifest)) throw UsageError("cannot read manifest " + manifest.string());
  ManifestOptions mo;
  mo.image_size = config.dims.image_size;
  mo.labels = config.labels;
  mo.threads = worker_limit();
  return load_manifest(manifest, mo);
}

std::string dataset_name(const fs::path& manifest) {
  const fs::path dir = fs::absolute(manifest).lexically_normal().parent_path();
  return dir.filename().empty() ? manifest.stem().string() : dir.filename().string();
}

struct TrainedRun {
  Checkpoint best;
  std::vector<EpochLog> log;
  std::optional<EvalReport> test;
  std::size_t training_set_size = 0;
};

/// Trains on the train split, saving the best checkpoint and the epoch log
/// into `dir`, then evaluates the best checkpoint on the test split.
TrainedRun train_into(const fs::path& dir, TrainConfig config, std::vector<MemeSample>& samples,
                      const std::string& tag) {
  fs::create_directories(dir);
  const Vocabulary vocab = build_vocabulary(samples, config.min_token_count);
  assign_token_ids(samples, vocab, static_cast<std::size_t>(config.dims.seq_len));

  std::ofstream log(dir / "train_log.jsonl");
  TrainedRun run;
  run.training_set_size = split_indices(samples, Split::kTrain).size();
  const TrainResult result = train(config, samples, vocab, [&](const EpochLog& e, const Checkpoint& best) {
    log << e.to_json().dump() << '\n';
    log.flush();
    if (e.improved) save_checkpoint(dir / "checkpoint.fnet", best);
    char line[200];
    std::snprintf(line, sizeof line, "%s epoch %zu: loss %.4f train_acc %.3f val_acc %.3f val_wf1 %.3f%s",
                  tag.c_str(), e.epoch, e.train_loss, e.train_accuracy, e.validation_accuracy,
                  e.validation_weighted_f1, e.improved ? " *" : "");
    info(line);
  });
  run.best = result.best;
  run.log = result.log;

  const auto test_idx = split_indices(samples, Split::kTest);
  if (!test_idx.empty()) {
    Model<float> model = model_from_checkpoint(run.best);
    run.test = report_from(predict(model, samples, test_idx));
    write_json(dir / "test_report.json", run.test->to_json());
  }
  return run;
}

json summary_json(const TrainedRun& run, const TrainConfig& config) {
  return {{"best", run.best.meta["best"]},
          {"epochs_run", run.log.size() - 1},
          {"training_set_size", run.training_set_size},
          {"vocabulary_size", run.best.meta["vocabulary"].size()},
          {"fusion", std::string(to_string(config.fusion))},
          {"seed", config.seed},
          {"test", run.test ? run.test->to_json() : json(nullptr)}};
}

// ---------------------------------------------------------------------------
// Commands.

struct SynthArgs {
  std::size_t n = 256;
  std::uint64_t seed = 7;
  std::string out;
  Index image_size = 150;
  std::vector<std::string> triggers{"alpha", "beta"};
  std::vector<std::string> labels{"not_hate", "hate"};
  std::size_t min_filler = 0, max_filler = 0;
};

int cmd_synth(const SynthArgs& a) {
  if (a.triggers.size() != 2) throw UsageError("--triggers takes exactly two words");
  if (a.labels.size() != 2) throw UsageError("--labels takes exactly two names (negative,positive)");
  RunManifest rm(a.out, "synth");
  SyntheticOptions opt;
  opt.n = a.n;
  opt.seed = a.seed;
  opt.image_size = a.image_size;
  opt.triggers = {a.triggers[0], a.triggers[1]};
  opt.label_names = {a.labels[0], a.labels[1]};
  opt.min_filler = a.min_filler;
  opt.max_filler = a.max_filler;
  rm["config"] = {{"n", a.n}, {"image_size", a.image_size}, {"triggers", a.triggers}, {"labels", a.labels},
                  {"min_filler", a.min_filler}, {"max_filler", a.max_filler}};
  rm["seeds"] = {a.seed};
  SyntheticSummary s;
  try {
    s = generate_synthetic(a.out, opt);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const json summary = {{"n", a.n},
                        {"positives", s.positives},
                        {"negatives", s.negatives},
                        {"train", s.split_sizes[0]},
                        {"validation", s.split_sizes[1]},
                        {"test", s.split_sizes[2]}};
  write_json(fs::path(a.out) / "synth_summary.json", summary);
  rm.output(s.manifest);
  rm.output(fs::path(a.out) / "synth_summary.json");
  rm.finish();
  info("wrote " + std::to_string(a.n) + " samples to " + s.manifest.string());
  return 0;
}

struct TrainArgs {
  std::string data, out;
  ConfigFlags flags;
};

int cmd_train(TrainArgs& a) {
  const TrainConfig config = a.flags.resolve();
  RunManifest rm(a.out, "train");
  rm.input(a.data);
  rm["seeds"] = {config.seed};
  Dataset data = load_data(a.data, config);
  rm["dataset"] = data.stats.to_json();
  TrainedRun run = train_into(a.out, config, data.samples, "train");
  TrainConfig resolved = config_from_checkpoint(run.best);
  rm["config"] = resolved.to_json();
  rm["training_set_size"] = run.training_set_size;
  write_json(fs::path(a.out) / "train_summary.json", summary_json(run, resolved));
  for (const char* f : {"checkpoint.fnet", "train_log.jsonl", "train_summary.json"}) rm.output(fs::path(a.out) / f);
  if (run.test) rm.output(fs::path(a.out) / "test_report.json");
  rm.finish();
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, split = "test", out;
  std::string fusion, config_file;
};

int cmd_eval(const EvalArgs& a) {
  RunManifest rm(a.out, "eval");
  rm.input(a.checkpoint);
  rm.input(a.data);
  if (!fs::is_regular_file(a.checkpoint)) throw UsageError("cannot read checkpoint " + a.checkpoint);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  TrainConfig config = config_from_checkpoint(ckpt);
  const Index vocab_size = config.dims.vocab_size;
  // An explicit config or kind must agree with the checkpoint's tensors.
  if (!a.config_file.empty()) {
    config = load_config_file(a.config_file, config);
    config.dims.vocab_size = vocab_size;
  }
  if (!a.fusion.empty()) config.fusion = parse_fusion_kind(a.fusion);
  rm["config"] = config.to_json();
  rm["seeds"] = {config.seed};
  Model<float> model(config.dims, config.fusion, config.mask_padding);
  restore(model, ckpt);

  const Split split = parse_split(a.split);
  Dataset data = load_data(a.data, config);
  assign_token_ids(data.samples, vocabulary_from_checkpoint(ckpt), static_cast<std::size_t>(config.dims.seq_len));
  const auto idx = split_indices(data.samples, split);
  if (idx.empty()) throw UsageError("split '" + a.split + "' of " + a.data + " is empty");
  const auto preds = predict(model, data.samples, idx);

  std::ofstream dump(fs::path(a.out) / "predictions.jsonl");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    dump << json{{"id", data.samples[idx[i]].id}, {"score", preds[i].score}, {"predicted", preds[i].predicted},
                 {"true", preds[i].label}}
                .dump()
         << '\n';
  }
  dump.close();

  const EvalReport report = report_from(preds);
  json out = {{"split", to_string(split)}, {"report", report.to_json()}, {"warnings", json::array()}};
  if (!report.auc) {
    const std::string w = "split '" + to_string(split) + "' contains a single class; AUC is undefined and reported as null";
    warn(w);
    out["warnings"].push_back(w);
  }
  write_json(fs::path(a.out) / "eval_report.json", out);
  rm.output(fs::path(a.out) / "eval_report.json");
  rm.output(fs::path(a.out) / "predictions.jsonl");
  rm.finish();
  info("weighted F1 " + std::to_string(report.weighted_f1) + " on " + std::to_string(idx.size()) + " samples");
  return 0;
}

struct AblateArgs {
  std::string data, out;
  std::size_t seeds = 5;
  std::uint64_t first_seed = 1;
  std::vector<std::string> kinds;
  ConfigFlags flags;
};

int cmd_ablate(AblateArgs& a) {
  if (a.seeds < 2) throw UsageError("--seeds must be at least 2 to report a standard deviation");
  const TrainConfig base = a.flags.resolve();
  std::vector<FusionKind> kinds;
  if (a.kinds.empty()) {
    kinds.assign(kAblationKinds.begin(), kAblationKinds.end());
  } else {
    for (const auto& k : a.kinds) kinds.push_back(parse_fusion_kind(k));
  }
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < a.seeds; ++i) seeds.push_back(a.first_seed + i);

  RunManifest rm(a.out, "ablate");
  rm.input(a.data);
  rm["seeds"] = seeds;
  rm["config"] = base.to_json();
  const Dataset data = load_data(a.data, base);
  rm["dataset"] = data.stats.to_json();

  struct Job {
    FusionKind kind;
    std::uint64_t seed;
    fs::path dir;
    EvalReport report;
  };
  std::vector<Job> jobs;
  for (FusionKind k : kinds) {
    for (std::uint64_t s : seeds) {
      jobs.push_back({k, s, fs::path(a.out) / std::string(to_string(k)) / ("seed" + std::to_string(s)), {}});
    }
  }

  // Independent runs; each has its own copy of the samples and output dir.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        Job& job = jobs[i];
        TrainConfig c = base;
        c.fusion = job.kind;
        c.seed = job.seed;
        std::vector<MemeSample> samples = data.samples;
        TrainedRun run = train_into(job.dir, c, samples, std::string(to_string(job.kind)) + "/seed" + std::to_string(job.seed));
        if (!run.test) throw UsageError("ablation needs a nonempty test split");
        job.report = *run.test;
        write_json(job.dir / "train_summary.json", summary_json(run, c));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const unsigned workers = std::min<unsigned>(worker_limit(), static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  // Ordered reduce: kind order, then seed order.
  json aggregate = {{"seeds", seeds}, {"kinds", json::object()}, {"table", json::array()}};
  std::ostringstream table;
  table << "| fusion | weighted F1 | AUC | accuracy |\n|---|---|---|---|\n";
  for (FusionKind k : kinds) {
    std::vector<EvalReport> reports;
    for (const auto& j : jobs) {
      if (j.kind == k) reports.push_back(j.report);
    }
    const SeedAggregate agg = aggregate_seeds(reports);
    aggregate["kinds"][std::string(to_string(k))] = agg.to_json();
    json row = {{"fusion", std::string(to_string(k))},
                {"weighted_f1", agg.mean.weighted_f1},
                {"weighted_f1_std", agg.std.weighted_f1},
                {"auc", agg.mean.auc ? json(*agg.mean.auc) : json(nullptr)},
                {"auc_std", agg.std.auc ? json(*agg.std.auc) : json(nullptr)},
                {"accuracy", agg.mean.accuracy},
                {"accuracy_std", agg.std.accuracy}};
    aggregate["table"].push_back(row);
    char line[200];
    if (agg.mean.auc) {
      std::snprintf(line, sizeof line, "| %s | %.3f ± %.3f | %.3f ± %.3f | %.3f ± %.3f |\n", std::string(to_string(k)).c_str(),
                    agg.mean.weighted_f1, agg.std.weighted_f1, *agg.mean.auc, *agg.std.auc, agg.mean.accuracy,
                    agg.std.accuracy);
    } else {
      std::snprintf(line, sizeof line, "| %s | %.3f ± %.3f | n/a | %.3f ± %.3f |\n", std::string(to_string(k)).c_str(),
                    agg.mean.weighted_f1, agg.std.weighted_f1, agg.mean.accuracy, agg.std.accuracy);
    }
    table << line;
  }
  write_json(fs::path(a.out) / "aggregate.json", aggregate);
  std::ofstream(fs::path(a.out) / "table.md") << table.str();
  for (const auto& j : jobs) {
    rm.output(j.dir / "checkpoint.fnet");
    rm.output(j.dir / "test_report.json");
  }
  rm.output(fs::path(a.out) / "aggregate.json");
  rm.output(fs::path(a.out) / "table.md");
  rm.finish();
  if (!quiet) std::cout << table.str();
  return 0;
}

struct CrossArgs {
  std::string source, target, baseline, out;
  std::string source_name, target_name;
  bool combined = false;
  ConfigFlags flags;
};

int cmd_crossdomain(CrossArgs& a) {
  const fs::path baseline_report = fs::path(a.baseline) / "test_report.json";
  const fs::path baseline_ckpt = fs::path(a.baseline) / "checkpoint.fnet";
  if (a.baseline.empty() || !fs::exists(baseline_report) || !fs::exists(baseline_ckpt)) {
    throw UsageError("no same-domain baseline found in '" + a.baseline +
                     "'; run `fusionet train --data " + a.target + " --out DIR` on the target first and pass --baseline DIR");
  }
  const std::string src_name = a.source_name.empty() ? dataset_name(a.source) : a.source_name;
  const std::string tgt_name = a.target_name.empty() ? dataset_name(a.target) : a.target_name;
  const std::string row_name = a.combined ? src_name + "+" + tgt_name : src_name;
  const bool same = !a.combined && fs::weakly_canonical(a.source) == fs::weakly_canonical(a.target);

  TrainConfig config = a.flags.resolve();
  RunManifest rm(a.out, "crossdomain");
  rm.input(a.source);
  rm.input(a.target);
  rm.input(a.baseline);
  rm["seeds"] = {config.seed};

  const double f_tt = EvalReport::from_json(read_json(baseline_report)).weighted_f1;
  EvalReport transfer;
  json details = {{"source", src_name}, {"target", tgt_name}, {"combined", a.combined}};
  if (same) {
    // Same domain: the baseline model is the answer.
    transfer = EvalReport::from_json(read_json(baseline_report));
    config = config_from_checkpoint(load_checkpoint(baseline_ckpt));
    rm["training_set_size"] = read_json(fs::path(a.baseline) / "train_summary.json").value("training_set_size", 0);
    details["reused_baseline"] = true;
  } else {
    Dataset source = load_data(a.source, config);
    Dataset target = load_data(a.target, config);
    std::vector<MemeSample> training;
    for (auto& s : source.samples) {
      if (s.split == Split::kTest) continue;
      s.id = src_name + ":" + s.id;
      training.push_back(std::move(s));
    }
    if (a.combined) {
      for (auto& s : target.samples) {
        if (s.split == Split::kTest) continue;
        s.id = tgt_name + ":" + s.id;
        training.push_back(std::move(s));
      }
    }
    TrainedRun run = train_into(fs::path(a.out) / "model", config, training, "crossdomain");
    rm["training_set_size"] = run.training_set_size;
    config = config_from_checkpoint(run.best);

    // Zero-shot: the target's test split seen only through the source vocabulary.
    Model<float> model = model_from_checkpoint(run.best);
    assign_token_ids(target.samples, vocabulary_from_checkpoint(run.best), static_cast<std::size_t>(config.dims.seq_len));
    const auto test_idx = split_indices(target.samples, Split::kTest);
    if (test_idx.empty()) throw UsageError("target " + a.target + " has an empty test split");
    transfer = report_from(predict(model, target.samples, test_idx));
    rm.output(fs::path(a.out) / "model" / "checkpoint.fnet");
  }
  rm["config"] = config.to_json();

  F1Grid grid{{{tgt_name, tgt_name}, f_tt}};
  grid[{row_name, tgt_name}] = transfer.weighted_f1;
  const RecoveryReport recovery = recovery_ratio(grid);
  const RecoveryEntry& r = recovery.at(row_name, tgt_name);
  details["f1_source_target"] = transfer.weighted_f1;
  details["f1_target_target"] = f_tt;
  details["recovery_ratio"] = r.ratio;
  details["recovery_percent"] = r.percent;
  details["transfer_report"] = transfer.to_json();
  details["recovery"] = recovery.to_json();
  write_json(fs::path(a.out) / "crossdomain_report.json", details);
  rm.output(fs::path(a.out) / "crossdomain_report.json");
  rm.finish();
  char line[160];
  std::snprintf(line, sizeof line, "F(%s, %s) = %.3f, F(%s, %s) = %.3f, R = %.1f%%", row_name.c_str(), tgt_name.c_str(),
                transfer.weighted_f1, tgt_name.c_str(), tgt_name.c_str(), f_tt, r.percent);
  info(line);
  return 0;
}

struct ReportArgs {
  std::string grid, ablation, out;
};

/// Recomputes summaries from existing outputs: a recovery table from an F1
/// grid file ({"source": {"target": f1}}) and/or an ablation table.
int cmd_report(const ReportArgs& a) {
  if (a.grid.empty() && a.ablation.empty()) throw UsageError("report needs --f1-grid and/or --ablation");
  RunManifest rm(a.out, "report");
  json out = json::object();
  if (!a.grid.empty()) {
    rm.input(a.grid);
    const json j = read_json(a.grid);
    F1Grid grid;
    for (const auto& [source, row] : j.items()) {
      for (const auto& [target, f1] : row.items()) grid[{source, target}] = f1.get<double>();
    }
    const RecoveryReport r = recovery_ratio(grid);
    out["recovery"] = r.to_json();
    for (const auto& e : r.entries) {
      char line[160];
      std::snprintf(line, sizeof line, "%-12s -> %-12s F1 %.3f  R %.3f (%.1f%%)", e.source.c_str(), e.target.c_str(),
                    e.f1, e.ratio, e.percent);
      if (!quiet) std::cout << line << '\n';
    }
  }
  if (!a.ablation.empty()) {
    rm.input(a.ablation);
    const json agg = read_json(fs::path(a.ablation) / "aggregate.json");
    out["ablation"] = agg.at("table");
    if (!quiet) {
      std::ifstream t(fs::path(a.ablation) / "table.md");
      std::cout << t.rdbuf();
    }
  }
  write_json(fs::path(a.out) / "report.json", out);
  rm.output(fs::path(a.out) / "report.json");
  rm.finish();
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Context-aware multimodal meme classification: training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("fusionet ") + FUSIONET_BUILD_ID);
  app.add_flag("-q,--quiet", quiet, "Only print warnings and errors");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate the synthetic image/caption XOR dataset");
  s->add_option("--n", synth.n, "Number of samples (>= 8)");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--image-size", synth.image_size, "Square image side in pixels");
  s->add_option("--triggers", synth.triggers, "Two trigger words")->delimiter(',');
  s->add_option("--labels", synth.labels, "Negative and positive label names")->delimiter(',');
  s->add_option("--min-filler", synth.min_filler, "Fewest filler words per caption");
  s->add_option("--max-filler", synth.max_filler, "Most filler words per caption");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train one model and keep the best checkpoint");
  t->add_option("--data", train.data, "Manifest (JSON lines)")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  train.flags.attach(t);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", eval.data, "Manifest (JSON lines)")->required();
  e->add_option("--split", eval.split, "train, validation or test");
  e->add_option("--out", eval.out, "Output directory")->required();
  e->add_option("--fusion", eval.fusion, "Expected fusion kind; must match the checkpoint");
  e->add_option("--config", eval.config_file, "Config whose dimensions must match the checkpoint")->check(CLI::ExistingFile);

  AblateArgs ablate;
  auto* ab = app.add_subcommand("ablate", "Train every fusion kind over several seeds");
  ab->add_option("--data", ablate.data, "Manifest (JSON lines)")->required();
  ab->add_option("--out", ablate.out, "Output directory")->required();
  ab->add_option("--seeds", ablate.seeds, "Number of seeds");
  ab->add_option("--first-seed", ablate.first_seed, "First seed; the rest follow consecutively");
  ab->add_option("--kinds", ablate.kinds, "Comma-separated fusion kinds (default: all seven)")->delimiter(',');
  ablate.flags.attach(ab, false);

  CrossArgs cross;
  auto* c = app.add_subcommand("crossdomain", "Zero-shot transfer from a source to a target dataset");
  c->add_option("--source", cross.source, "Source manifest")->required();
  c->add_option("--target", cross.target, "Target manifest")->required();
  c->add_option("--baseline", cross.baseline, "Output directory of `train` on the target");
  c->add_option("--out", cross.out, "Output directory")->required();
  c->add_option("--source-name", cross.source_name, "Display name of the source (default: manifest directory)");
  c->add_option("--target-name", cross.target_name, "Display name of the target");
  c->add_flag("--combined", cross.combined, "Train on source and target training splits together");
  cross.flags.attach(c);

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Summaries from existing outputs");
  r->add_option("--f1-grid", report.grid, "JSON object of F1 scores: {source: {target: f1}}");
  r->add_option("--ablation", report.ablation, "Output directory of `ablate`");
  r->add_option("--out", report.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (ab->parsed()) return cmd_ablate(ablate);
    if (c->parsed()) return cmd_crossdomain(cross);
    if (r->parsed()) return cmd_report(report);
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  } catch (const UsageError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  } catch (const ManifestError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  } catch (const CorruptCheckpoint& ex) {
    std::cerr << "error: corrupt checkpoint: " << ex.what() << '\n';
    return 2;
  } catch (const CheckpointMismatch& ex) {
    std::cerr << "error: checkpoint does not match the model: " << ex.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace fusionet::cli
