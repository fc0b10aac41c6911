#include "fusionet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fusionet {
namespace {

double safe_div(double num, double den) { return den == 0 ? 0.0 : num / den; }

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw MetricError("labels and predictions differ in length (" + std::to_string(labels.size()) + " vs " +
                      std::to_string(predictions.size()) + ")");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) || (predictions[i] != 0 && predictions[i] != 1)) {
      throw MetricError("labels and predictions must be 0 or 1");
    }
    ++cm.counts[labels[i]][predictions[i]];
  }
  return cm;
}

PrfResult weighted_prf(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.empty()) throw MetricError("weighted_prf: empty input");
  PrfResult r;
  r.confusion = confusion_matrix(labels, predictions);
  const auto& cm = r.confusion;
  const double n = static_cast<double>(cm.total());
  for (int c = 0; c < 2; ++c) {
    const double tp = static_cast<double>(cm.counts[c][c]);
    const double precision = safe_div(tp, static_cast<double>(cm.column_total(c)));
    const double recall = safe_div(tp, static_cast<double>(cm.row_total(c)));
    r.class_f1[c] = safe_div(2 * precision * recall, precision + recall);
    const double weight = static_cast<double>(cm.row_total(c)) / n;
    r.precision += weight * precision;
    r.recall += weight * recall;
    r.weighted_f1 += weight * r.class_f1[c];
  }
  return r;
}

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw MetricError("roc_auc: labels and scores differ in length");
  // Rank-sum form of Mann-Whitney: sort once, average ranks over ties.
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0;
  std::int64_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw MetricError("roc_auc: labels must be 0 or 1");
      if (y == 1) {
        positive_rank_sum += mean_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::int64_t negatives = static_cast<std::int64_t>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("roc_auc: undefined with a single class present");
  }
  const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1) / 2.0) / (p * q);
}

MisclassificationRates misclassification_rates(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw MetricError("misclassification_rates: empty confusion matrix");
  MisclassificationRates mr;
  if (cm.row_total(0) > 0) mr.class0 = static_cast<double>(cm.counts[0][1]) / static_cast<double>(cm.row_total(0));
  if (cm.row_total(1) > 0) mr.class1 = static_cast<double>(cm.counts[1][0]) / static_cast<double>(cm.row_total(1));
  mr.combined = static_cast<double>(cm.errors()) / static_cast<double>(cm.total());
  return mr;
}

nlohmann::json EvalReport::to_json() const {
  return {{"precision", precision},   {"recall", recall},
          {"weighted_f1", weighted_f1}, {"auc", optional_json(auc)},
          {"mr_class0", optional_json(mr_class0)}, {"mr_class1", optional_json(mr_class1)},
          {"mr_combined", mr_combined}, {"accuracy", accuracy},
          {"samples", samples}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.weighted_f1 = j.at("weighted_f1").get<double>();
  r.auc = optional_from(j.at("auc"));
  r.mr_class0 = optional_from(j.at("mr_class0"));
  r.mr_class1 = optional_from(j.at("mr_class1"));
  r.mr_combined = j.at("mr_combined").get<double>();
  r.accuracy = j.value("accuracy", 1.0 - r.mr_combined);
  r.samples = j.value("samples", std::int64_t{0});
  return r;
}

EvalReport evaluate_predictions(std::span<const int> labels, std::span<const double> scores,
                                std::span<const int> predictions) {
  const PrfResult prf = weighted_prf(labels, predictions);
  const MisclassificationRates mr = misclassification_rates(prf.confusion);
  EvalReport r;
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.weighted_f1 = prf.weighted_f1;
  r.mr_class0 = mr.class0;
  r.mr_class1 = mr.class1;
  r.mr_combined = mr.combined;
  r.accuracy = 1.0 - mr.combined;
  r.samples = prf.confusion.total();
  if (prf.confusion.row_total(0) > 0 && prf.confusion.row_total(1) > 0) r.auc = roc_auc(labels, scores);
  return r;
}

namespace {

struct Moments {
  double mean, std;
};

Moments moments(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  // Shifted by the first sample so identical inputs give an exact zero spread.
  double shift = 0;
  for (double x : xs) shift += x - xs.front();
  const double mean = xs.front() + shift / n;
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

}  // namespace

SeedAggregate aggregate_seeds(const std::vector<EvalReport>& reports) {
  if (reports.size() < 2) throw MetricError("aggregate_seeds: need at least two reports");
  SeedAggregate agg;
  agg.seeds = reports;

  auto plain = [&](double EvalReport::*field) {
    std::vector<double> xs;
    for (const auto& r : reports) xs.push_back(r.*field);
    const Moments m = moments(xs);
    agg.mean.*field = m.mean;
    agg.std.*field = m.std;
  };
  auto optional = [&](std::optional<double> EvalReport::*field, const char* name) {
    std::vector<double> xs;
    for (const auto& r : reports) {
      if ((r.*field).has_value() != (reports.front().*field).has_value()) {
        throw MetricError(std::string("aggregate_seeds: reports disagree on whether ") + name + " is defined");
      }
      if (r.*field) xs.push_back(*(r.*field));
    }
    if (xs.empty()) return;
    const Moments m = moments(xs);
    agg.mean.*field = m.mean;
    agg.std.*field = m.std;
  };
  plain(&EvalReport::precision);
  plain(&EvalReport::recall);
  plain(&EvalReport::weighted_f1);
  plain(&EvalReport::mr_combined);
  plain(&EvalReport::accuracy);
  optional(&EvalReport::auc, "auc");
  optional(&EvalReport::mr_class0, "mr_class0");
  optional(&EvalReport::mr_class1, "mr_class1");
  agg.mean.samples = reports.front().samples;
  return agg;
}

nlohmann::json SeedAggregate::to_json() const {
  nlohmann::json j = mean.to_json();
  nlohmann::json s = std.to_json();
  s.erase("samples");
  j["std"] = s;
  j["seeds"] = nlohmann::json::array();
  for (const auto& r : seeds) j["seeds"].push_back(r.to_json());
  return j;
}

const RecoveryEntry& RecoveryReport::at(const std::string& source, const std::string& target) const {
  for (const auto& e : entries) {
    if (e.source == source && e.target == target) return e;
  }
  throw MetricError("no recovery entry for " + source + " -> " + target);
}

nlohmann::json RecoveryReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    rows.push_back({{"source", e.source}, {"target", e.target}, {"f1", e.f1}, {"ratio", e.ratio},
                    {"percent", e.percent}});
  }
  return {{"entries", rows}};
}

RecoveryReport recovery_ratio(const F1Grid& grid) {
  RecoveryReport report;
  for (const auto& [key, f1] : grid) {
    const auto& [source, target] = key;
    auto diag = grid.find({target, target});
    if (diag == grid.end()) throw MetricError("recovery_ratio: no in-domain score F(" + target + ", " + target + ")");
    if (!(diag->second > 0)) {
      throw MetricError("recovery_ratio: in-domain score F(" + target + ", " + target + ") must be positive");
    }
    RecoveryEntry e{source, target, f1, f1 / diag->second, 0};
    e.percent = std::round(e.ratio * 1000.0) / 10.0;
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace fusionet
