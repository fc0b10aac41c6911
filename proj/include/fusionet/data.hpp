#pragma once

#include "fusionet/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fusionet {

enum class Split { kTrain = 0, kValidation = 1, kTest = 2 };

inline constexpr std::array<Split, 3> kAllSplits{Split::kTrain, Split::kValidation, Split::kTest};

std::string to_string(Split split);
/// Accepts "train", "validation" (or "val") and "test".
Split parse_split(std::string_view text);

/// Normalizes a caption into tokens: URLs removed, anything that is not a
/// letter, combining mark or whitespace removed, Latin letters lowercased,
/// split on whitespace.
std::vector<std::string> clean_caption(std::string_view raw);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kOov = 1;

  Vocabulary();

  /// Ids assigned in order of first appearance. Tokens seen fewer than
  /// `min_count` times map to OOV.
  static Vocabulary build(const std::vector<std::vector<std::string>>& documents, int min_count = 1);
  /// Rebuilds from the id-ordered token list produced by tokens().
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  /// Id-ordered tokens, including the "<pad>" and "<oov>" placeholders.
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Maps tokens to ids, keeps the first `length` and pads with PAD at the end.
std::vector<int> tokens_to_ids(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                               std::size_t length = 60);

using LabelMap = std::map<std::string, int>;

/// hate/offense -> 1, not_hate/not_offense -> 0.
LabelMap default_label_map();

struct MemeSample {
  std::string id;
  std::filesystem::path image_path;
  Tensor<float> image;  // [S, S, 3] in [0, 1]
  std::string caption;
  std::vector<std::string> tokens;
  std::vector<int> token_ids;  // filled by assign_token_ids
  int label = 0;
  Split split = Split::kTrain;
};

struct DatasetStats {
  std::array<std::array<Index, 2>, 3> counts{};  // [split][label]

  Index count(Split split, int label) const {
    return counts[static_cast<std::size_t>(split)][static_cast<std::size_t>(label)];
  }
  Index total(Split split) const { return count(split, 0) + count(split, 1); }
  Index total() const { return total(Split::kTrain) + total(Split::kValidation) + total(Split::kTest); }
  nlohmann::json to_json() const;
};

DatasetStats compute_stats(const std::vector<MemeSample>& samples);

/// Every bad manifest record, reported together.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(const std::string& path, std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct ManifestOptions {
  Index image_size = 150;
  LabelMap labels = default_label_map();
  /// Decode workers; 0 means hardware concurrency. Output order never depends on it.
  unsigned threads = 0;
};

struct Dataset {
  std::vector<MemeSample> samples;
  DatasetStats stats;
};

/// Reads a JSON-lines manifest. image_path is resolved relative to the
/// manifest's directory. Samples keep file order.
Dataset load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});

/// Vocabulary over the training split only.
Vocabulary build_vocabulary(const std::vector<MemeSample>& samples, int min_count = 1);

void assign_token_ids(std::vector<MemeSample>& samples, const Vocabulary& vocab, std::size_t length = 60);

/// Indices into `samples` for one epoch of `split`, grouped in batches. Only
/// the training split is shuffled; the permutation depends on (seed, epoch).
std::vector<std::vector<std::size_t>> make_batches(const std::vector<MemeSample>& samples, Split split,
                                                   std::size_t batch_size, std::uint64_t seed,
                                                   std::uint64_t epoch);

std::vector<std::size_t> split_indices(const std::vector<MemeSample>& samples, Split split);

// Synthetic XOR task: a square or a circle, and one of two trigger words.
// label = 1 iff (square and first trigger) or (circle and second trigger).

struct SyntheticOptions {
  std::size_t n = 256;
  std::uint64_t seed = 7;
  Index image_size = 150;
  std::array<std::string, 2> triggers{"alpha", "beta"};
  std::size_t min_filler = 0;  // filler words per caption, drawn uniformly from [min, max]
  std::size_t max_filler = 0;
  bool jitter = true;  // per-image background noise, tint and size variation
  std::array<std::string, 2> label_names{"not_hate", "hate"};  // [label 0, label 1]
};

struct SyntheticSummary {
  std::filesystem::path manifest;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::array<std::size_t, 3> split_sizes{};
};

/// Writes images/ and manifest.jsonl under `out_dir`.
SyntheticSummary generate_synthetic(const std::filesystem::path& out_dir, const SyntheticOptions& options);

}  // namespace fusionet
