#pragma once

// Checkpoint file layout:
//
//   TVREC-CHECKPOINT 1\n
//   <decimal byte length of the JSON header>\n
//   <JSON header: model config + tensor manifest {name, rows, cols, offset}>
//   <payload: row-major little-endian IEEE-754 float64, offsets in bytes>
//
// The header is plain text so a checkpoint can be inspected with `head`.

#include <filesystem>

#include <json.hpp>

#include "tvrec/model.hpp"

namespace tvrec::model {

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams& params);
/// Throws DataError on a missing file, a malformed header, or tensors whose
/// shapes disagree with the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace tvrec::model
