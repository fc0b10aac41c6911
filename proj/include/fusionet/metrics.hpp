#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fusionet {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// counts[true][predicted] for binary labels.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, 2>, 2> counts{};

  std::int64_t row_total(int c) const { return counts[c][0] + counts[c][1]; }
  std::int64_t column_total(int c) const { return counts[0][c] + counts[1][c]; }
  std::int64_t total() const { return row_total(0) + row_total(1); }
  std::int64_t errors() const { return counts[0][1] + counts[1][0]; }
};

ConfusionMatrix confusion_matrix(std::span<const int> labels, std::span<const int> predictions);

struct PrfResult {
  double precision = 0;
  double recall = 0;
  double weighted_f1 = 0;
  std::array<double, 2> class_f1{};
  ConfusionMatrix confusion;
};

/// Support-weighted precision, recall and F1; 0/0 counts as 0.
PrfResult weighted_prf(std::span<const int> labels, std::span<const int> predictions);

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Throws MetricError unless both classes are present.
double roc_auc(std::span<const int> labels, std::span<const double> scores);

struct MisclassificationRates {
  std::optional<double> class0;  // unset when no sample has true class 0
  std::optional<double> class1;
  double combined = 0;
};

MisclassificationRates misclassification_rates(const ConfusionMatrix& cm);

struct EvalReport {
  double precision = 0;
  double recall = 0;
  double weighted_f1 = 0;
  std::optional<double> auc;
  std::optional<double> mr_class0;
  std::optional<double> mr_class1;
  double mr_combined = 0;
  double accuracy = 0;
  std::int64_t samples = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Full report from true labels, class-1 scores and hard predictions. AUC is
/// left unset (not an error) when only one class is present.
EvalReport evaluate_predictions(std::span<const int> labels, std::span<const double> scores,
                                std::span<const int> predictions);

struct SeedAggregate {
  EvalReport mean;
  EvalReport std;  // population standard deviation, field by field
  std::vector<EvalReport> seeds;

  /// The mean fields at top level plus "seeds" and "std".
  nlohmann::json to_json() const;
};

/// Needs at least two reports that agree on which optional metrics are set.
SeedAggregate aggregate_seeds(const std::vector<EvalReport>& reports);

/// F(S, T): weighted F1 of a model trained on S and evaluated on T.
using F1Grid = std::map<std::pair<std::string, std::string>, double>;

struct RecoveryEntry {
  std::string source;
  std::string target;
  double f1 = 0;
  double ratio = 0;    // F(S, T) / F(T, T)
  double percent = 0;  // ratio * 100 rounded to one decimal
};

struct RecoveryReport {
  std::vector<RecoveryEntry> entries;  // grid order

  const RecoveryEntry& at(const std::string& source, const std::string& target) const;
  nlohmann::json to_json() const;
};

/// Throws MetricError when a target's diagonal entry is missing or not positive.
RecoveryReport recovery_ratio(const F1Grid& grid);

}  // namespace fusionet
