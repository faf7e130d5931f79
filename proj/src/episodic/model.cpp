#include <algorithm>

#include "safsar/episodic/pipeline.hpp"

namespace safsar {

VideoEncoderConfig PipelineConfig::video_config(std::size_t channels) const {
    VideoEncoderConfig v;
    v.shape = shape;
    v.depth = video_depth;
    v.tubelet_frames = tubelet_frames;
    v.tubelet_height = tubelet_height;
    v.tubelet_width = tubelet_width;
    v.channels = channels;
    v.freeze_depth = freeze_depth;
    return v;
}

TextEncoderConfig PipelineConfig::text_config(std::size_t vocab_size) const {
    TextEncoderConfig t;
    t.shape = shape;
    t.depth = text_depth;
    t.vocab_size = vocab_size;
    return t;
}

void PipelineConfig::validate() const {
    shape.validate();
    model.validate();
    if (frames == 0) throw ConfigError("frame count T must be at least 1");
    video_config(1).validate();
}

std::size_t Model::head_row(std::size_t class_id) const {
    auto it = std::lower_bound(train_classes.begin(), train_classes.end(), class_id);
    if (it == train_classes.end() || *it != class_id) {
        throw ContractError("class " + std::to_string(class_id) + " is not a training class");
    }
    return static_cast<std::size_t>(it - train_classes.begin());
}

template <typename T>
void init_params(ParamStore<T>& store, const Model& m, std::uint64_t seed) {
    const PipelineConfig& cfg = m.config;
    if (m.input == Dataset::Kind::clips) {
        init_video_encoder(store, cfg.video_config(m.channels), seed);
    }
    if (m.has_text_encoder) init_text_encoder(store, cfg.text_config(m.vocab.size()), seed);
    if (cfg.model.use_fusion) init_fusion(store, cfg.shape, cfg.model.fusion_layers, seed);
    if (cfg.model.use_tlm) init_tlm(store, cfg.shape, seed);
    if (!m.train_classes.empty()) init_global_head(store, m.train_classes.size(), cfg.shape.dim, seed);
}

Model init_model(const Dataset& data, const PipelineConfig& config, std::uint64_t seed) {
    data.validate();
    Model m;
    m.config = config;
    m.input = data.kind;
    if (data.kind == Dataset::Kind::features) {
        m.config.shape.dim = data.feature_dim;
    } else {
        if (data.clips.empty()) throw ContractError("clip dataset without clips");
        m.channels = data.clips.front().channels;
    }
    m.config.validate();

    std::vector<ClassInfo> classes = data.classes;
    std::sort(classes.begin(), classes.end(), [](auto& a, auto& b) { return a.id < b.id; });
    std::vector<std::string> corpus;
    bool missing_text = false;
    for (const auto& c : classes) {
        corpus.push_back(c.description);
        if (!data.text_features.contains(c.id)) missing_text = true;
    }
    m.vocab = Vocabulary::build(corpus);
    m.has_text_encoder = m.config.model.use_fusion && missing_text;
    m.train_classes = data.split_classes(Split::train);
    init_params(m.params, m, seed);
    return m;
}

template <typename T>
Var<T> item_feature(ParamBinding<T>& bind, const Model& model, const Dataset& data,
                    std::size_t item, Rng* augment_rng) {
    if (item >= data.items.size()) throw ContractError("item index out of range");
    if (data.kind != model.input) throw ContractError("dataset kind does not match the model input");
    if (data.kind == Dataset::Kind::features) {
        const auto& f = data.features[item];
        Tensor<T> t({f.size()});
        for (std::size_t i = 0; i < f.size(); ++i) t[i] = static_cast<T>(f[i]);
        return bind.tape().constant(std::move(t));
    }
    VideoTensor clip = sample_frames(data.clips[item], model.config.frames);
    clip = augment_rng ? augment(clip, model.config.augment, *augment_rng)
                       : eval_view(clip, model.config.augment);
    return video_encode(bind, clip, model.config.video_config(model.channels));
}

std::map<std::size_t, Tensor<float>> class_text_features(const Model& model, const Dataset& data) {
    std::map<std::size_t, Tensor<float>> out;
    if (!model.config.model.use_fusion) return out;
    Tape<float> tape;
    ParamBinding<float> bind(tape, model.params, false);
    for (const auto& c : data.classes) {
        auto cached = data.text_features.find(c.id);
        if (cached != data.text_features.end()) {
            out.emplace(c.id, cached->second);
            continue;
        }
        if (!model.has_text_encoder) {
            throw ConfigError("class " + std::to_string(c.id) +
                              " has no cached text features and the model has no text encoder");
        }
        TokenSequence tokens = tokenize(c.description, model.vocab);
        out.emplace(c.id, text_encode(bind, tokens, model.config.text_config(model.vocab.size())).value());
    }
    return out;
}

template <typename T>
EpisodeInputs<T> episode_inputs(const Episode& episode, std::size_t shots,
                                const std::map<std::size_t, Var<T>>& features,
                                const std::map<std::size_t, Var<T>>& text) {
    EpisodeInputs<T> in;
    in.ways = episode.classes.size();
    in.shots = shots;
    for (const auto& ref : episode.support) in.support.push_back({ref.class_id, features.at(ref.item)});
    in.query = features.at(episode.query.item);
    for (std::size_t cls : episode.classes) {
        auto it = text.find(cls);
        if (it != text.end()) in.text.emplace(cls, it->second);
    }
    return in;
}

template <typename T>
EpisodeLosses<T> episode_losses(const Model& model, const HeadParams<T>& head,
                                const Episode& episode, const std::map<std::size_t, Var<T>>& features,
                                const std::map<std::size_t, Var<T>>& text) {
    const std::size_t shots = episode.support.size() / std::max<std::size_t>(episode.classes.size(), 1);
    EpisodeInputs<T> in = episode_inputs(episode, shots, features, text);
    EpisodeLosses<T> out;
    out.output = forward_episode(in, head, model.config.model);
    out.l1 = loss_episode(out.output.probs, episode.query.class_id);
    out.total = out.l1;
    if (head.has_global) {
        std::vector<LabeledFeature<T>> support;
        for (const auto& ref : episode.support) {
            support.push_back({model.head_row(ref.class_id), features.at(ref.item)});
        }
        LabeledFeature<T> query{model.head_row(episode.query.class_id), features.at(episode.query.item)};
        out.l2 = loss_global(std::span<const LabeledFeature<T>>(support), query, head.global_w);
        out.total = total_loss(out.l1, out.l2, static_cast<T>(model.config.model.lambda));
    }
    return out;
}

#define SAFSAR_INSTANTIATE_PIPELINE(T)                                                         \
    template void init_params<T>(ParamStore<T>&, const Model&, std::uint64_t);                 \
    template Var<T> item_feature<T>(ParamBinding<T>&, const Model&, const Dataset&, std::size_t, \
                                    Rng*);                                                     \
    template EpisodeInputs<T> episode_inputs<T>(const Episode&, std::size_t,                   \
                                                const std::map<std::size_t, Var<T>>&,          \
                                                const std::map<std::size_t, Var<T>>&);         \
    template EpisodeLosses<T> episode_losses<T>(const Model&, const HeadParams<T>&,            \
                                                const Episode&,                                \
                                                const std::map<std::size_t, Var<T>>&,          \
                                                const std::map<std::size_t, Var<T>>&);

SAFSAR_INSTANTIATE_PIPELINE(float)
SAFSAR_INSTANTIATE_PIPELINE(double)

}  // namespace safsar
