#pragma once

#include "safsar/episodic/pipeline.hpp"
#include "safsar/numerics/grad_check.hpp"

namespace safsar {

/// Small end-to-end problem for finite-difference checks: random clips through
/// the video encoder, L-token descriptions through the frozen text encoder,
/// fusion, TLM and both losses, in double precision.
struct PipelineCheckSetup {
    std::size_t dim = 16;
    std::size_t heads = 4;
    std::size_t ways = 3;
    std::size_t shots = 2;
    std::size_t tokens = 5;  // L
    std::size_t fusion_layers = 2;
    std::size_t video_depth = 2;
    std::size_t text_depth = 1;
    std::size_t clip_frames = 4;
    std::size_t clip_size = 8;
    std::uint64_t seed = 0;
};

struct PipelineCheck {
    Dataset data;
    Model model;              // configuration and vocabulary
    ParamStore<double> params;
    Episode episode;
    Objective<double> objective;  // total loss of `episode`
};

/// Builds data, parameters and the objective; all randomness comes from setup.seed.
PipelineCheck make_pipeline_check(const PipelineCheckSetup& setup);

/// Number of trainable scalars and tensors in a store.
std::size_t trainable_tensors(const ParamStore<double>& params);

}  // namespace safsar
