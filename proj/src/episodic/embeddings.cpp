#include "safsar/episodic/embeddings.hpp"

namespace safsar {

using nlohmann::json;

namespace {

json to_array(const Tensor<float>& t) { return json(std::vector<float>(t.values().begin(), t.values().end())); }

}  // namespace

json embedding_record(const Episode& episode, const EpisodeOutput<float>& output,
                      const Tensor<float>& query_raw) {
    json rec;
    rec["episode"] = episode.index;
    rec["classes"] = episode.classes;
    rec["query_class"] = episode.query.class_id;
    rec["predicted"] = output.probs.argmax();
    rec["probabilities"] = to_array(output.probs.probs.value());
    json proto = json::object(), fused = json::object(), adapted = json::object();
    for (std::size_t i = 0; i < output.prototypes.size(); ++i) {
        const std::string key = std::to_string(output.prototypes.classes[i]);
        proto[key] = to_array(output.prototypes.prototypes[i].value());
        fused[key] = to_array(output.fused[i].prototype.value());
        adapted[key] = to_array(output.adapted.supports[i].value());
    }
    rec["prototype"] = proto;
    rec["fused_prototype"] = fused;
    rec["adapted_support"] = adapted;
    rec["query"] = to_array(query_raw);
    rec["adapted_query"] = to_array(output.adapted.query.value());
    return rec;
}

std::size_t dump_embeddings(const Dataset& data, const Model& model, const EvalConfig& config,
                            std::ostream& out) {
    const SplitView view = SplitView::of(data, config.split);
    check_capacity(view, config.ways, config.shots);
    const auto text_cache = class_text_features(model, data);
    for (std::size_t e = 0; e < config.episodes; ++e) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(e)));
        const Episode ep = sample_episode(view, config.ways, config.shots, rng, e);
        Tape<float> tape;
        ParamBinding<float> bind(tape, model.params, false);
        HeadParams<float> head = bind_head(bind, model.config.shape.heads);
        std::map<std::size_t, Var<float>> features;
        for (const auto& ref : ep.support) features.emplace(ref.item, item_feature(bind, model, data, ref.item, nullptr));
        features.emplace(ep.query.item, item_feature(bind, model, data, ep.query.item, nullptr));
        std::map<std::size_t, Var<float>> text;
        for (std::size_t cls : ep.classes) {
            auto it = text_cache.find(cls);
            if (it != text_cache.end()) text.emplace(cls, tape.constant(it->second));
        }
        auto output = forward_episode(episode_inputs(ep, config.shots, features, text), head, model.config.model);
        out << embedding_record(ep, output, features.at(ep.query.item).value()).dump() << '\n';
    }
    return config.episodes;
}

}  // namespace safsar
