#pragma once

// Parameter file: "SFPS", u32 version, u64 metadata length, metadata JSON
// (pipeline config, vocabulary, head classes), u64 tensor count, then per tensor
// u32 name length, name, u8 frozen, u32 rank, u64 extents, float32 values.
// Integers and floats are little-endian.

#include <filesystem>

#include <json.hpp>

#include "safsar/episodic/pipeline.hpp"

namespace safsar::cache {

nlohmann::json pipeline_config_to_json(const PipelineConfig& config);
/// Missing keys keep their defaults; mistyped keys throw ConfigError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// Everything about a model except its tensors.
nlohmann::json model_metadata(const Model& model);

void save_model(const Model& model, const std::filesystem::path& path);
/// Throws NotACacheError (wrong magic), CacheVersionError, CacheCorruptionError, CacheIoError.
Model load_model(const std::filesystem::path& path);

}  // namespace safsar::cache
