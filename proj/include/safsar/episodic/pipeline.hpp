#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "safsar/encoders/backbones.hpp"
#include "safsar/episodic/dataset.hpp"
#include "safsar/model/safsar.hpp"

namespace safsar {

struct PipelineConfig {
    EncoderShape shape{};
    std::size_t video_depth = 4;
    std::size_t text_depth = 2;
    std::size_t tubelet_frames = 2;
    std::size_t tubelet_height = 4;
    std::size_t tubelet_width = 4;
    std::size_t freeze_depth = 0;
    std::size_t frames = 8;  // T
    AugmentConfig augment{};
    ModelConfig model{};

    VideoEncoderConfig video_config(std::size_t channels) const;
    TextEncoderConfig text_config(std::size_t vocab_size) const;
    void validate() const;
};

/// Everything needed to run the pipeline on a dataset: configuration, the
/// vocabulary behind the text encoder, the training classes that index the
/// global head, and the parameters.
struct Model {
    PipelineConfig config;
    Dataset::Kind input = Dataset::Kind::clips;
    std::size_t channels = 1;
    Vocabulary vocab;
    std::vector<std::size_t> train_classes;  // head row r <-> train_classes[r]
    bool has_text_encoder = false;
    ParamStore<float> params;

    std::size_t head_row(std::size_t class_id) const;
};

/// Creates every parameter the configuration needs. The video encoder exists
/// only for clip inputs; the text encoder only when fusion is on and some
/// class lacks cached token features; fusion and TLM only when enabled.
template <typename T>
void init_params(ParamStore<T>& store, const Model& shape_source, std::uint64_t seed);

/// Builds the vocabulary from all class descriptions, fixes the head classes to
/// the train split and initializes parameters. For feature datasets the model
/// width follows the cached feature dimension.
Model init_model(const Dataset& data, const PipelineConfig& config, std::uint64_t seed);

/// Feature f of one item. Clips are frame-sampled, then augmented when `augment_rng`
/// is given or center-cropped otherwise, then encoded.
template <typename T>
Var<T> item_feature(ParamBinding<T>& bind, const Model& model, const Dataset& data,
                    std::size_t item, Rng* augment_rng);

/// Token features s_c of every class that fusion may need (L x d, computed once:
/// the text path is frozen).
std::map<std::size_t, Tensor<float>> class_text_features(const Model& model, const Dataset& data);

template <typename T>
struct EpisodeLosses {
    Var<T> l1;
    Var<T> l2;  // invalid when the model has no global head
    Var<T> total;
    EpisodeOutput<T> output;
};

/// Forward pass plus both losses. `features` holds f for every support item and
/// the query, keyed by item index; global labels come from model.head_row.
template <typename T>
EpisodeLosses<T> episode_losses(const Model& model, const HeadParams<T>& head,
                                const Episode& episode, const std::map<std::size_t, Var<T>>& features,
                                const std::map<std::size_t, Var<T>>& text);

template <typename T>
EpisodeInputs<T> episode_inputs(const Episode& episode, std::size_t shots,
                                const std::map<std::size_t, Var<T>>& features,
                                const std::map<std::size_t, Var<T>>& text);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// One update of every non-frozen parameter that has a gradient.
    void step(ParamStore<float>& store, const std::map<std::string, Tensor<float>>& grads);
    std::size_t steps() const noexcept { return t_; }

private:
    AdamConfig config_;
    std::size_t t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct TrainConfig {
    std::size_t ways = 5;
    std::size_t shots = 1;
    std::size_t episodes = 1000;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    std::size_t val_every = 200;
    std::size_t val_episodes = 200;
    /// Replays episode 0 every step (optimization sanity checks).
    bool repeat_first_episode = false;
};

struct LossRecord {
    std::size_t episode = 0;
    double l1 = 0.0;
    double l2 = 0.0;
    double total = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<LossRecord> trace;
    std::vector<std::pair<std::size_t, double>> val_history;  // (episodes done, accuracy)
    std::optional<std::size_t> selected_at;                   // episodes done at the kept snapshot
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Episodic training of `model` on the train split. Frozen parameters are never
/// touched. A non-finite loss throws DivergedError. When the val split can host
/// the episode shape, parameters are evaluated every `val_every` episodes and the
/// best snapshot is returned.
TrainResult train(const Dataset& data, Model model, const TrainConfig& config,
                  const StepCallback& on_step = {});

struct EvalConfig {
    Split split = Split::test;
    std::size_t ways = 5;
    std::size_t shots = 1;
    std::size_t episodes = 1000;
    std::uint64_t seed = 0;
    std::size_t workers = 0;  // 0: OpenMP default
    bool random_predictor = false;
};

struct EvalReport {
    double accuracy = 0.0;
    double ci95 = 0.0;
    std::size_t episodes = 0;
    std::size_t ways = 0;
    std::size_t shots = 0;
    std::uint64_t seed = 0;
    std::string split;
    bool random_predictor = false;
    std::vector<std::uint8_t> correct;  // per episode, by index
};

/// 1.96 sqrt(acc (1 - acc) / E).
double ci95_half_width(double accuracy, std::size_t episodes);

/// E episodes with per-episode streams derive_seed(seed, e). Features of the
/// split's items are computed once (evaluation view); episodes then run in
/// parallel, so results do not depend on the worker count. Refuses to score a
/// non-train split that shares classes with the model's training classes.
EvalReport evaluate(const Dataset& data, const Model& model, const EvalConfig& config);

}  // namespace safsar
