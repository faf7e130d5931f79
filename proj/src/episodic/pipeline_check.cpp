#include "safsar/episodic/pipeline_check.hpp"

#include <memory>

namespace safsar {

std::size_t trainable_tensors(const ParamStore<double>& params) {
    std::size_t n = 0;
    for (const auto& e : params.entries()) n += e.frozen ? 0 : 1;
    return n;
}

PipelineCheck make_pipeline_check(const PipelineCheckSetup& s) {
    static const char* words[] = {"blob", "moves", "left", "right", "up", "down", "fast", "slow",
                                  "spins", "drifts", "quickly", "across", "the", "frame", "bright"};
    Rng rng(derive_seed(s.seed, "gradcheck.data"));
    const std::size_t classes = s.ways + 2;  // head wider than the episode

    auto data = std::make_shared<Dataset>();
    data->kind = Dataset::Kind::clips;
    for (std::size_t c = 0; c < classes; ++c) {
        std::string text;
        for (std::size_t t = 0; t < s.tokens; ++t) {
            if (t) text += ' ';
            text += words[uniform_index(rng, std::size(words))];
        }
        data->classes.push_back({c, text, Split::train});
        for (std::size_t i = 0; i <= s.shots; ++i) {
            VideoTensor clip(s.clip_frames, s.clip_size, s.clip_size, 1);
            for (auto& v : clip.data) v = static_cast<float>(uniform01(rng));
            data->items.push_back({"c" + std::to_string(c) + "i" + std::to_string(i), c});
            data->clips.push_back(std::move(clip));
        }
    }

    PipelineConfig cfg;
    cfg.shape = {s.dim, s.heads, 4};
    cfg.video_depth = s.video_depth;
    cfg.text_depth = s.text_depth;
    cfg.frames = s.clip_frames;
    cfg.model.fusion_layers = s.fusion_layers;
    auto model = std::make_shared<Model>(init_model(*data, cfg, s.seed));
    model->params = ParamStore<float>{};

    PipelineCheck out;
    init_params(out.params, *model, s.seed);
    Rng erng(derive_seed(s.seed, "gradcheck.episode"));
    out.episode = sample_episode(SplitView::of(*data, Split::train), s.ways, s.shots, erng);

    const Episode episode = out.episode;
    out.objective = [data, model, episode](ParamBinding<double>& bind) {
        HeadParams<double> head = bind_head(bind, model->config.shape.heads);
        std::map<std::size_t, Var<double>> features;
        for (const auto& ref : episode.support) {
            features.emplace(ref.item, item_feature(bind, *model, *data, ref.item, nullptr));
        }
        features.emplace(episode.query.item, item_feature(bind, *model, *data, episode.query.item, nullptr));
        std::map<std::size_t, Var<double>> text;
        const TextEncoderConfig tc = model->config.text_config(model->vocab.size());
        for (std::size_t cls : episode.classes) {
            text.emplace(cls, text_encode(bind, tokenize(data->class_info(cls).description, model->vocab), tc));
        }
        return episode_losses(*model, head, episode, features, text).total;
    };
    out.data = *data;
    out.model = *model;
    return out;
}

}  // namespace safsar
