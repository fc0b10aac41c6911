#include "fusionet/config.hpp"

#include <fstream>

namespace fusionet {
namespace {

struct DimKey {
  const char* name;
  Index ModelDims::*field;
};

constexpr DimKey kDimKeys[] = {
    {"image_size", &ModelDims::image_size},       {"conv1_channels", &ModelDims::conv1_channels},
    {"conv2_channels", &ModelDims::conv2_channels}, {"visual_dim", &ModelDims::visual_dim},
    {"embed_dim", &ModelDims::embed_dim},         {"hidden", &ModelDims::hidden},
    {"seq_len", &ModelDims::seq_len},             {"attention_dim", &ModelDims::attention_dim},
    {"baseline_hidden", &ModelDims::baseline_hidden}, {"vocab_size", &ModelDims::vocab_size},
};

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
  }
}

std::uint64_t get_count(const nlohmann::json& v, const std::string& key) {
  const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (!ok) throw ConfigError("config key '" + key + "' must be a non-negative integer, got " + v.dump());
  return v.get<std::uint64_t>();
}

SelectionMetric parse_selection(const std::string& s) {
  if (s == "accuracy") return SelectionMetric::kAccuracy;
  if (s == "weighted_f1") return SelectionMetric::kWeightedF1;
  throw ConfigError("selection_metric must be 'accuracy' or 'weighted_f1', got '" + s + "'");
}

}  // namespace

std::string to_string(SelectionMetric metric) {
  return metric == SelectionMetric::kAccuracy ? "accuracy" : "weighted_f1";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (min_token_count < 1) throw ConfigError("min_token_count must be at least 1");
  for (const auto& k : kDimKeys) {
    if (dims.*k.field < 1) throw ConfigError(std::string(k.name) + " must be positive");
  }
  if (dims.image_size < 4) throw ConfigError("image_size must be at least 4");
  if (!(dims.alignment_gain > 0)) throw ConfigError("alignment_gain must be positive");
  for (const auto& [name, label] : labels) {
    if (label != 0 && label != 1) throw ConfigError("label '" + name + "' must map to 0 or 1");
  }
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"learning_rate", learning_rate},
                      {"batch_size", batch_size},
                      {"epochs", epochs},
                      {"seed", seed},
                      {"fusion", std::string(to_string(fusion))},
                      {"mask_padding", mask_padding},
                      {"selection_metric", to_string(selection)},
                      {"min_token_count", min_token_count},
                      {"labels", labels}};
  for (const auto& k : kDimKeys) j[k.name] = dims.*k.field;
  j["alignment_gain"] = dims.alignment_gain;
  return j;
}

void TrainConfig::apply(const nlohmann::json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : flat.items()) {
    if (key == "learning_rate") learning_rate = get_as<double>(v, key);
    else if (key == "batch_size") batch_size = get_count(v, key);
    else if (key == "epochs") epochs = get_count(v, key);
    else if (key == "seed") seed = get_count(v, key);
    else if (key == "fusion") fusion = parse_fusion_kind(get_as<std::string>(v, key));
    else if (key == "mask_padding") mask_padding = get_as<bool>(v, key);
    else if (key == "selection_metric") selection = parse_selection(get_as<std::string>(v, key));
    else if (key == "min_token_count") min_token_count = get_as<int>(v, key);
    else if (key == "labels") labels = get_as<LabelMap>(v, key);
    else if (key == "alignment_gain") dims.alignment_gain = get_as<double>(v, key);
    else {
      bool found = false;
      for (const auto& k : kDimKeys) {
        if (key == k.name) {
          dims.*k.field = get_as<Index>(v, key);
          found = true;
        }
      }
      if (!found) throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

TrainConfig TrainConfig::from_json(const nlohmann::json& flat) {
  TrainConfig c;
  c.apply(flat);
  return c;
}

TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  base.apply(j);
  return base;
}

}  // namespace fusionet
