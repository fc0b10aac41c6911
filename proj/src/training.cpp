#include "fusionet/training.hpp"

namespace fusionet {
namespace {

ModelDims dims_for(TrainConfig& config, const Vocabulary& vocab) {
  config.dims.vocab_size = vocab.size();
  config.validate();
  return config.dims;
}

std::vector<Tensor<float>*> parameter_list(Model<float>& model) {
  std::vector<Tensor<float>*> out;
  model.visit([&](const std::string&, Tensor<float>& t) { out.push_back(&t); });
  return out;
}

Model<float> initialized(const TrainConfig& config) {
  Model<float> model(config.dims, config.fusion, config.mask_padding);
  model.initialize(config.seed);
  return model;
}

void check_ready(const MemeSample& s, const ModelDims& dims) {
  if (static_cast<Index>(s.token_ids.size()) != dims.seq_len) {
    throw TrainingError("sample " + s.id + " has " + std::to_string(s.token_ids.size()) +
                        " token ids; expected " + std::to_string(dims.seq_len) + " (call assign_token_ids)");
  }
}

}  // namespace

std::vector<Prediction> predict(Model<float>& model, const std::vector<MemeSample>& samples,
                                const std::vector<std::size_t>& indices) {
  std::vector<Prediction> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const MemeSample& s = samples[i];
    check_ready(s, model.dims());
    Graph<float> g;
    const auto fwd = model.forward(g, s.image, s.token_ids);
    if (g.faulted()) throw TrainingError("non-finite value while scoring " + s.id + ": " + g.fault_message());
    out.push_back({static_cast<double>(fwd.probs.value()(0, 1)), predicted_class(fwd.probs.value()), s.label});
  }
  return out;
}

EvalReport report_from(const std::vector<Prediction>& predictions) {
  std::vector<int> labels, predicted;
  std::vector<double> scores;
  for (const auto& p : predictions) {
    labels.push_back(p.label);
    predicted.push_back(p.predicted);
    scores.push_back(p.score);
  }
  return evaluate_predictions(labels, scores, predicted);
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch},
          {"train_loss", train_loss},
          {"train_accuracy", train_accuracy},
          {"validation_accuracy", validation_accuracy},
          {"validation_weighted_f1", validation_weighted_f1},
          {"improved", improved}};
}

Trainer::Trainer(TrainConfig config, const std::vector<MemeSample>& samples, const Vocabulary& vocab)
    : config_(std::move(config)),
      samples_(samples),
      vocabulary_(vocab.tokens()),
      model_((dims_for(config_, vocab), initialized(config_))),
      optimizer_(parameter_list(model_), {.learning_rate = config_.learning_rate}),
      validation_(split_indices(samples, Split::kValidation)) {
  const auto train_idx = split_indices(samples, Split::kTrain);
  if (train_idx.empty()) throw TrainingError("training split is empty");
  if (validation_.empty()) throw TrainingError("validation split is empty");

  // Epoch 0 describes the untrained model.
  EpochLog initial;
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t i : train_idx) {
    const MemeSample& s = samples_[i];
    check_ready(s, model_.dims());
    Graph<float> g;
    const auto fwd = model_.forward(g, s.image, s.token_ids);
    loss += static_cast<double>(cross_entropy(fwd.probs, s.label).value()(0, 0));
    correct += predicted_class(fwd.probs.value()) == s.label;
  }
  initial.train_loss = loss / static_cast<double>(train_idx.size());
  initial.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_idx.size());
  evaluate_validation(initial);
  initial.improved = true;
  best_checkpoint_ = capture(model_, checkpoint_meta(initial));
  log_.push_back(initial);
}

void Trainer::evaluate_validation(EpochLog& entry) {
  const EvalReport r = report_from(predict(model_, samples_, validation_));
  entry.validation_accuracy = r.accuracy;
  entry.validation_weighted_f1 = r.weighted_f1;
}

nlohmann::json Trainer::checkpoint_meta(const EpochLog& at) const {
  return {{"config", config_.to_json()},
          {"vocabulary", vocabulary_},
          {"best",
           {{"epoch", at.epoch},
            {"validation_accuracy", at.validation_accuracy},
            {"validation_weighted_f1", at.validation_weighted_f1},
            {"selection_metric", to_string(config_.selection)}}}};
}

void Trainer::consider(EpochLog& entry) {
  const EpochLog& best = log_[best_epoch_];
  entry.improved = config_.selection == SelectionMetric::kAccuracy
                       ? entry.validation_accuracy > best.validation_accuracy
                       : entry.validation_weighted_f1 > best.validation_weighted_f1;
  if (entry.improved) {
    best_epoch_ = entry.epoch;
    best_checkpoint_ = capture(model_, checkpoint_meta(entry));
  }
}

const EpochLog& Trainer::run_epoch() {
  EpochLog entry;
  entry.epoch = log_.size();
  const auto batches = make_batches(samples_, Split::kTrain, config_.batch_size, config_.seed, entry.epoch);
  double loss_sum = 0;
  std::size_t correct = 0, seen = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    const float weight = 1.0f / static_cast<float>(batch.size());
    model_.zero_grad();
    for (std::size_t i : batch) {
      const MemeSample& s = samples_[i];
      Graph<float> g;
      const auto fwd = model_.forward(g, s.image, s.token_ids);
      Var<float> loss = cross_entropy(fwd.probs, s.label);
      if (g.faulted()) {
        throw TrainingError("non-finite value at epoch " + std::to_string(entry.epoch) + ", batch " +
                            std::to_string(b) + " (sample " + s.id + "): " + g.fault_message());
      }
      loss_sum += static_cast<double>(loss.value()(0, 0));
      correct += predicted_class(fwd.probs.value()) == s.label;
      ++seen;
      g.backward(scale(loss, weight));
    }
    optimizer_.step();
    model_.visit([&](const std::string& name, Tensor<float>& t) {
      if (!t.all_finite()) {
        throw TrainingError("parameter " + name + " became non-finite at epoch " + std::to_string(entry.epoch) +
                            ", batch " + std::to_string(b));
      }
    });
  }
  // Running figures over the epoch, as seen before each batch's update.
  entry.train_loss = loss_sum / static_cast<double>(seen);
  entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  evaluate_validation(entry);
  consider(entry);
  log_.push_back(entry);
  return log_.back();
}

TrainResult train(const TrainConfig& config, const std::vector<MemeSample>& samples, const Vocabulary& vocab,
                  const std::function<void(const EpochLog&, const Checkpoint&)>& on_epoch) {
  Trainer trainer(config, samples, vocab);
  if (on_epoch) on_epoch(trainer.log().front(), trainer.best_checkpoint());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const EpochLog& entry = trainer.run_epoch();
    if (on_epoch) on_epoch(entry, trainer.best_checkpoint());
  }
  return {trainer.best_checkpoint(), trainer.log()};
}

TrainConfig config_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("config")) throw CheckpointMismatch("checkpoint carries no config");
  return TrainConfig::from_json(ckpt.meta.at("config"));
}

Vocabulary vocabulary_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("vocabulary")) throw CheckpointMismatch("checkpoint carries no vocabulary");
  return Vocabulary::from_tokens(ckpt.meta.at("vocabulary").get<std::vector<std::string>>());
}

Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
  const TrainConfig config = config_from_checkpoint(ckpt);
  Model<float> model(config.dims, config.fusion, config.mask_padding);
  restore(model, ckpt);
  return model;
}

}  // namespace fusionet
