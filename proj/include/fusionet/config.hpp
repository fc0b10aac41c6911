#pragma once

#include "fusionet/data.hpp"
#include "fusionet/dims.hpp"
#include "fusionet/fusion.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace fusionet {

enum class SelectionMetric { kAccuracy, kWeightedF1 };

/// Everything that determines a training run besides the data.
struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::uint64_t seed = 7;
  FusionKind fusion = FusionKind::kMcaScf;
  ModelDims dims;  // vocab_size is filled from the data
  bool mask_padding = false;
  SelectionMetric selection = SelectionMetric::kAccuracy;
  int min_token_count = 1;
  LabelMap labels = default_label_map();

  /// Throws ConfigError on non-positive sizes or learning rate.
  void validate() const;

  /// Flat object; dims appear as top-level keys (visual_dim, hidden, ...).
  nlohmann::json to_json() const;
  /// Overrides only the keys present in `flat`. Unknown keys are an error.
  void apply(const nlohmann::json& flat);
  static TrainConfig from_json(const nlohmann::json& flat);
};

/// Reads a flat JSON config file and applies it over `base`.
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base = {});

std::string to_string(SelectionMetric metric);

}  // namespace fusionet
