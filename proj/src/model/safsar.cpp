#include "safsar/model/safsar.hpp"

#include <algorithm>

namespace safsar {

void ModelConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (!(temperature > 0.0)) throw ConfigError("softmax temperature must be positive");
}

template <typename T>
const Var<T>& PrototypeSet<T>::at(std::size_t class_id) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), class_id);
    if (it == classes.end() || *it != class_id) {
        throw ContractError("class " + std::to_string(class_id) + " not in prototype set");
    }
    return prototypes[static_cast<std::size_t>(it - classes.begin())];
}

template <typename T>
std::size_t ClassProbabilities<T>::index_of(std::size_t class_id) const {
    auto it = std::find(classes.begin(), classes.end(), class_id);
    if (it == classes.end()) {
        throw ContractError("class " + std::to_string(class_id) + " is not among the episode classes");
    }
    return static_cast<std::size_t>(it - classes.begin());
}

template <typename T>
std::size_t ClassProbabilities<T>::argmax() const {
    const Tensor<T>& p = probs.value();
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[best]) best = i;
    }
    return classes[best];
}

template <typename T>
T ClassProbabilities<T>::prob(std::size_t class_id) const {
    return probs.value()[index_of(class_id)];
}

template <typename T>
void init_fusion(ParamStore<T>& store, const EncoderShape& shape, std::size_t layers,
                 std::uint64_t seed) {
    init_encoder_stack(store, "fusion", shape, layers, seed);
}

template <typename T>
void init_tlm(ParamStore<T>& store, const EncoderShape& shape, std::uint64_t seed) {
    init_encoder_layer(store, "tlm", shape, seed);
}

template <typename T>
void init_global_head(ParamStore<T>& store, std::size_t classes, std::size_t dim,
                      std::uint64_t seed) {
    if (classes == 0) throw ConfigError("global head needs at least one class");
    // stored C x d; glorot limit is symmetric in the two fans
    Tensor<T> w = glorot_uniform<T>(classes, dim, seed, "head.w");
    store.add("head.w", std::move(w));
}

template <typename T>
HeadParams<T> bind_head(ParamBinding<T>& bind, std::size_t heads) {
    HeadParams<T> p;
    p.fusion = bind_encoder_stack(bind, "fusion", heads);
    if (bind.store().contains("tlm.attn.wq")) {
        p.tlm = bind_encoder_layer(bind, "tlm", heads);
        p.has_tlm = true;
    }
    if (bind.store().contains("head.w")) {
        p.global_w = bind("head.w");
        p.has_global = true;
    }
    return p;
}

template <typename T>
PrototypeSet<T> class_prototypes(std::span<const LabeledFeature<T>> support, std::size_t ways,
                                 std::size_t shots) {
    if (ways == 0 || shots == 0) throw ContractError("prototypes need N >= 1 and K >= 1");
    std::map<std::size_t, std::vector<Var<T>>> groups;
    for (const auto& item : support) groups[item.class_id].push_back(item.feature);
    if (groups.size() != ways) {
        throw ContractError("support holds " + std::to_string(groups.size()) + " classes, expected " +
                            std::to_string(ways));
    }
    PrototypeSet<T> out;
    for (auto& [cls, feats] : groups) {
        if (feats.size() != shots) {
            throw ContractError("class " + std::to_string(cls) + " has " +
                                std::to_string(feats.size()) + " support features, expected " +
                                std::to_string(shots));
        }
        out.classes.push_back(cls);
        out.prototypes.push_back(shots == 1 ? feats[0]
                                            : mean_rows(concat_rows(std::span<const Var<T>>(feats))));
    }
    return out;
}

template <typename T>
FusedFeature<T> mm_fuse(const Var<T>& prototype, const Var<T>& text,
                        const EncoderStackParams<T>& fusion) {
    const Tensor<T>& pv = prototype.value();
    const Tensor<T>& tv = text.value();
    if (pv.rank() != 1 || tv.rank() != 2 || pv.size() != tv.cols()) {
        throw ContractError("mm_fuse: prototype " + shape_str(pv.shape()) +
                            " does not match token features " + shape_str(tv.shape()));
    }
    const std::size_t tokens = tv.rows();
    Var<T> joint = concat_rows({prototype, text});
    Var<T> out = encoder_stack(joint, fusion);
    return {row(out, 0), slice_rows(out, 1, tokens)};
}

template <typename T>
AdaptedFeatures<T> task_adapt(std::span<const std::size_t> classes,
                              std::span<const Var<T>> supports, const Var<T>& query,
                              const EncoderLayerParams<T>& tlm) {
    if (supports.empty() || supports.size() != classes.size()) {
        throw ContractError("task_adapt needs one support vector per class and N >= 1");
    }
    std::vector<std::size_t> order(classes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return classes[a] < classes[b]; });

    std::vector<Var<T>> tokens;
    tokens.reserve(supports.size() + 1);
    for (std::size_t i : order) tokens.push_back(supports[i]);
    tokens.push_back(query);
    Var<T> out = encoder_layer(concat_rows(std::span<const Var<T>>(tokens)), tlm);

    AdaptedFeatures<T> adapted;
    for (std::size_t j = 0; j < order.size(); ++j) {
        adapted.classes.push_back(classes[order[j]]);
        adapted.supports.push_back(row(out, j));
    }
    adapted.query = row(out, order.size());
    return adapted;
}

template <typename T>
ClassProbabilities<T> classify(const AdaptedFeatures<T>& adapted, T temperature) {
    if (!(temperature > T{0})) throw ConfigError("softmax temperature must be positive");
    std::vector<Var<T>> scores;
    scores.reserve(adapted.supports.size());
    for (const auto& s : adapted.supports) scores.push_back(cosine(s, adapted.query));
    Var<T> logits = stack_scalars(std::span<const Var<T>>(scores));
    if (temperature != T{1}) logits = scale(logits, T{1} / temperature);
    ClassProbabilities<T> out;
    out.classes = adapted.classes;
    out.logits = logits;
    out.probs = softmax(logits);
    return out;
}

template <typename T>
Var<T> loss_episode(const ClassProbabilities<T>& probs, std::size_t true_class) {
    return scale(log(pick(probs.probs, probs.index_of(true_class))), T{-1});
}

template <typename T>
Var<T> loss_global(std::span<const LabeledFeature<T>> support, const LabeledFeature<T>& query,
                   const Var<T>& head_w) {
    if (support.empty()) throw ContractError("loss_global needs a non-empty support set");
    const std::size_t classes = head_w.value().rows();
    auto ce = [&](const LabeledFeature<T>& item) {
        if (item.class_id >= classes) {
            throw ContractError("global label " + std::to_string(item.class_id) +
                                " outside [0, " + std::to_string(classes) + ")");
        }
        return cross_entropy(matmul_nt(item.feature, head_w), item.class_id);
    };
    std::vector<Var<T>> terms;
    terms.reserve(support.size());
    for (const auto& item : support) terms.push_back(ce(item));
    Var<T> support_sum = sum(stack_scalars(std::span<const Var<T>>(terms)));
    Var<T> support_mean = scale(support_sum, T{1} / static_cast<T>(support.size()));
    return add(support_mean, ce(query));
}

template <typename T>
Var<T> total_loss(const Var<T>& l1, const Var<T>& l2, const Var<T>& lambda) {
    return add(l1, mul(lambda, l2));
}

template <typename T>
Var<T> total_loss(const Var<T>& l1, const Var<T>& l2, T lambda) {
    if (!(lambda >= T{0})) throw ConfigError("lambda must be non-negative");
    if (lambda == T{0}) return l1;
    return add(l1, scale(l2, lambda));
}

template <typename T>
EpisodeOutput<T> forward_episode(const EpisodeInputs<T>& inputs, const HeadParams<T>& params,
                                 const ModelConfig& config) {
    config.validate();
    EpisodeOutput<T> out;
    out.prototypes = class_prototypes(std::span<const LabeledFeature<T>>(inputs.support),
                                      inputs.ways, inputs.shots);

    std::vector<Var<T>> support_tokens;
    for (std::size_t i = 0; i < out.prototypes.size(); ++i) {
        const std::size_t cls = out.prototypes.classes[i];
        const Var<T>& proto = out.prototypes.prototypes[i];
        if (config.use_fusion) {
            auto it = inputs.text.find(cls);
            if (it == inputs.text.end()) {
                throw ConfigError("fusion is enabled but class " + std::to_string(cls) +
                                  " has no text features");
            }
            out.fused.push_back(mm_fuse(proto, it->second, params.fusion));
        } else {
            out.fused.push_back({proto, Var<T>{}});
        }
        support_tokens.push_back(out.fused.back().prototype);
    }

    if (config.use_tlm) {
        if (!params.has_tlm) throw ConfigError("TLM is enabled but its parameters are missing");
        out.adapted = task_adapt(std::span<const std::size_t>(out.prototypes.classes),
                                 std::span<const Var<T>>(support_tokens), inputs.query, params.tlm);
    } else {
        out.adapted.classes = out.prototypes.classes;
        out.adapted.supports = support_tokens;
        out.adapted.query = inputs.query;
    }
    out.probs = classify(out.adapted, static_cast<T>(config.temperature));
    return out;
}

#define SAFSAR_INSTANTIATE_MODEL(T)                                                            \
    template struct PrototypeSet<T>;                                                           \
    template struct ClassProbabilities<T>;                                                     \
    template void init_fusion<T>(ParamStore<T>&, const EncoderShape&, std::size_t, std::uint64_t); \
    template void init_tlm<T>(ParamStore<T>&, const EncoderShape&, std::uint64_t);             \
    template void init_global_head<T>(ParamStore<T>&, std::size_t, std::size_t, std::uint64_t); \
    template HeadParams<T> bind_head<T>(ParamBinding<T>&, std::size_t);                        \
    template PrototypeSet<T> class_prototypes<T>(std::span<const LabeledFeature<T>>,           \
                                                 std::size_t, std::size_t);                    \
    template FusedFeature<T> mm_fuse<T>(const Var<T>&, const Var<T>&,                          \
                                        const EncoderStackParams<T>&);                         \
    template AdaptedFeatures<T> task_adapt<T>(std::span<const std::size_t>,                    \
                                              std::span<const Var<T>>, const Var<T>&,          \
                                              const EncoderLayerParams<T>&);                   \
    template ClassProbabilities<T> classify<T>(const AdaptedFeatures<T>&, T);                  \
    template Var<T> loss_episode<T>(const ClassProbabilities<T>&, std::size_t);                \
    template Var<T> loss_global<T>(std::span<const LabeledFeature<T>>, const LabeledFeature<T>&, \
                                   const Var<T>&);                                             \
    template Var<T> total_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&);                \
    template Var<T> total_loss<T>(const Var<T>&, const Var<T>&, T);                            \
    template EpisodeOutput<T> forward_episode<T>(const EpisodeInputs<T>&, const HeadParams<T>&, \
                                                 const ModelConfig&);

SAFSAR_INSTANTIATE_MODEL(float)
SAFSAR_INSTANTIATE_MODEL(double)

}  // namespace safsar
