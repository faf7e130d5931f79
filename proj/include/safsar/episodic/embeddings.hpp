#pragma once

#include <ostream>

#include <json.hpp>

#include "safsar/episodic/pipeline.hpp"

namespace safsar {

/// One JSON object per episode: raw prototypes, fused prototypes, adapted
/// supports and the raw and adapted query, each keyed by class id.
nlohmann::json embedding_record(const Episode& episode, const EpisodeOutput<float>& output,
                                const Tensor<float>& query_raw);

/// Runs `config.episodes` evaluation episodes and writes one line per episode.
/// Returns the number of records written.
std::size_t dump_embeddings(const Dataset& data, const Model& model, const EvalConfig& config,
                            std::ostream& out);

}  // namespace safsar
