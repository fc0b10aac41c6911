#pragma once

#include "fusionet/checkpoint.hpp"
#include "fusionet/config.hpp"
#include "fusionet/data.hpp"
#include "fusionet/loss.hpp"
#include "fusionet/metrics.hpp"
#include "fusionet/model.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusionet {

/// Adam with bias correction. Moments are allocated lazily per parameter;
/// parameters without a gradient buffer are skipped.
template <typename Scalar>
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(std::vector<Tensor<Scalar>*> params, Options options)
      : params_(std::move(params)), options_(options), first_(params_.size()), second_(params_.size()) {}

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    const auto b1 = static_cast<Scalar>(options_.beta1), b2 = static_cast<Scalar>(options_.beta2);
    const auto lr = static_cast<Scalar>(options_.learning_rate / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(options_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<Scalar>& p = *params_[i];
      if (!p.has_grad()) continue;
      if (first_[i].size() == 0) {
        first_[i] = Matrix<Scalar>::Zero(p.rows(), p.cols());
        second_[i] = Matrix<Scalar>::Zero(p.rows(), p.cols());
      }
      const Matrix<Scalar>& g = p.grad();
      first_[i] = b1 * first_[i] + (Scalar(1) - b1) * g;
      second_[i] = b2 * second_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
      // p -= lr * m_hat / (sqrt(v_hat) + eps)
      p.data().array() -= lr * first_[i].array() / ((second_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  long steps() const { return steps_; }

 private:
  std::vector<Tensor<Scalar>*> params_;
  Options options_;
  std::vector<Matrix<Scalar>> first_;
  std::vector<Matrix<Scalar>> second_;
  long steps_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Prediction {
  double score = 0;  // probability of class 1
  int predicted = 0;
  int label = 0;
};

/// Forward-only pass over `indices` in order.
std::vector<Prediction> predict(Model<float>& model, const std::vector<MemeSample>& samples,
                                const std::vector<std::size_t>& indices);

EvalReport report_from(const std::vector<Prediction>& predictions);

struct EpochLog {
  std::size_t epoch = 0;  // 0 is the untrained model
  double train_loss = 0;
  double train_accuracy = 0;
  double validation_accuracy = 0;
  double validation_weighted_f1 = 0;
  bool improved = false;

  nlohmann::json to_json() const;
};

/// Incremental training: construct, then call run_epoch() as often as needed.
/// Training is a pure function of the config, the samples and the seed.
class Trainer {
 public:
  /// `samples` must already carry token ids; only train and validation
  /// splits are used. Evaluates the initial model as epoch 0.
  Trainer(TrainConfig config, const std::vector<MemeSample>& samples, const Vocabulary& vocab);

  /// One pass over the training split followed by validation. Throws
  /// TrainingError if a non-finite value appears.
  const EpochLog& run_epoch();

  const std::vector<EpochLog>& log() const { return log_; }
  const EpochLog& best() const { return log_[best_epoch_]; }
  /// Checkpoint of the best epoch so far (the initial model until an epoch improves on it).
  const Checkpoint& best_checkpoint() const { return best_checkpoint_; }
  Model<float>& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  std::size_t epochs_run() const { return log_.size() - 1; }

  /// Meta block stored in every checkpoint this trainer writes.
  nlohmann::json checkpoint_meta(const EpochLog& at) const;

 private:
  void evaluate_validation(EpochLog& entry);
  void consider(EpochLog& entry);

  TrainConfig config_;
  const std::vector<MemeSample>& samples_;
  std::vector<std::string> vocabulary_;
  Model<float> model_;
  Adam<float> optimizer_;
  std::vector<std::size_t> validation_;
  std::vector<EpochLog> log_;
  std::size_t best_epoch_ = 0;
  Checkpoint best_checkpoint_;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
};

/// Runs config.epochs epochs. `on_epoch` fires after each logged epoch
/// (including epoch 0); `improved` is true when the best checkpoint changed.
TrainResult train(const TrainConfig& config, const std::vector<MemeSample>& samples, const Vocabulary& vocab,
                  const std::function<void(const EpochLog&, const Checkpoint&)>& on_epoch = {});

/// Rebuilds a model (kind, dims, weights) from a checkpoint.
Model<float> model_from_checkpoint(const Checkpoint& ckpt);

/// Config and vocabulary stored in a checkpoint.
TrainConfig config_from_checkpoint(const Checkpoint& ckpt);
Vocabulary vocabulary_from_checkpoint(const Checkpoint& ckpt);

}  // namespace fusionet
