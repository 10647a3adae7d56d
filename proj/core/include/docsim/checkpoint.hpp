#pragma once

#include <memory>
#include <string>

#include "docsim/architectures.hpp"

namespace docsim {

// Model configuration as JSON text (stable key order) and back.
std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json_text(const std::string& text);

// FNV-1a over the canonical config JSON; recorded in every eval report.
std::string config_hash(const ModelConfig& config);

// Checkpoint file: feature-layout version, the full model config and the
// named parameter list with shapes and raw values. JSON, lossless for
// doubles.
void save_checkpoint(const std::string& path, const ExtractionModel& model);

// Rebuilds the model from the stored config and overwrites its parameters.
// A feature-layout or parameter-shape mismatch is an error.
std::unique_ptr<ExtractionModel> load_checkpoint(const std::string& path);

}  // namespace docsim
