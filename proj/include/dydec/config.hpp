#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dydec/model.hpp"
#include "dydec/synth.hpp"
#include "dydec/train.hpp"

namespace dydec {

using Json = nlohmann::ordered_json;

/// TOML-style configuration: `[section]` or `[section.sub]` headers, `key = value` lines and
/// `#` comments. Values are JSON literals (numbers, true/false, "strings", [arrays], {objects});
/// anything that does not parse as JSON is taken as a bare string.
Json parse_config_text(const std::string& text, const std::string& origin = "<config>");
Json load_config_file(const std::filesystem::path& path);

/// Applies "section.key=value" (value parsed as in config files).
void apply_override(Json& config, const std::string& assignment);

Json model_config_to_json(const ModelConfig& config);
/// Keys absent from `j` keep their value from `base`. Unknown keys are rejected.
ModelConfig model_config_from_json(const Json& j, ModelConfig base = {});

Json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

DatasetConfig dataset_config_from_json(const Json& j, DatasetConfig base = {});

/// One of single_scale, bn, nonorm, reg_count.
void apply_ablation(ModelConfig& config, const std::string& ablation);

std::string to_string(DecomposeMode mode);
std::string to_string(NormMode norm);
std::string to_string(HeadMode head);
std::string to_string(Taper taper);

}  // namespace dydec
