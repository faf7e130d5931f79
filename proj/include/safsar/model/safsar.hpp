#pragma once

// Few-shot head of the pipeline. Given encoder features for an episode:
//
//   prototypes   f_c  = mean of the K support features of class c
//   fusion       [f*_c, s*] = Stack([f_c ; s_c])       (prototype is row 0)
//   adaptation   [f~_c..., f~_q] = Layer([f*_c... ; f_q])  (classes ascending, query last)
//   classify     p_c = softmax_c(cos(f~_c, f~_q) / temperature)
//   losses       L1 = -log p_true,  L2 = global cross-entropy over all training
//                classes via head W,  L = L1 + lambda L2
//
// use_fusion / use_tlm switch the two middle stages off (identity).

#include <map>
#include <span>
#include <vector>

#include "safsar/transformer/encoder.hpp"

namespace safsar {

struct ModelConfig {
    double lambda = 1.0;
    std::size_t fusion_layers = 2;
    bool use_fusion = true;
    bool use_tlm = true;
    double temperature = 1.0;

    void validate() const;
};

template <typename T>
struct LabeledFeature {
    std::size_t class_id = 0;
    Var<T> feature;
};

template <typename T>
struct PrototypeSet {
    std::vector<std::size_t> classes;  // ascending
    std::vector<Var<T>> prototypes;    // aligned with classes

    const Var<T>& at(std::size_t class_id) const;
    std::size_t size() const noexcept { return classes.size(); }
};

template <typename T>
struct FusedFeature {
    Var<T> prototype;  // f*_c, shape {d}
    Var<T> text;       // s*, shape {L, d}; kept for inspection only
};

template <typename T>
struct AdaptedFeatures {
    std::vector<std::size_t> classes;  // ascending
    std::vector<Var<T>> supports;      // f~_c aligned with classes
    Var<T> query;                      // f~_q
};

template <typename T>
struct ClassProbabilities {
    std::vector<std::size_t> classes;  // ascending
    Var<T> logits;                     // cos / temperature
    Var<T> probs;

    /// Class with the highest probability; ties go to the lowest class id.
    std::size_t argmax() const;
    T prob(std::size_t class_id) const;
    std::size_t index_of(std::size_t class_id) const;
};

/// Bound parameters of the few-shot head.
template <typename T>
struct HeadParams {
    EncoderStackParams<T> fusion;
    EncoderLayerParams<T> tlm;
    Var<T> global_w;  // C x d
    bool has_tlm = false;
    bool has_global = false;
};

template <typename T>
void init_fusion(ParamStore<T>& store, const EncoderShape& shape, std::size_t layers,
                 std::uint64_t seed);
template <typename T>
void init_tlm(ParamStore<T>& store, const EncoderShape& shape, std::uint64_t seed);
/// W in R^{classes x d}.
template <typename T>
void init_global_head(ParamStore<T>& store, std::size_t classes, std::size_t dim,
                      std::uint64_t seed);

template <typename T>
HeadParams<T> bind_head(ParamBinding<T>& bind, std::size_t heads);

/// Mean of the K features of each class. Throws ContractError unless exactly
/// `ways` classes with `shots` features each are present.
template <typename T>
PrototypeSet<T> class_prototypes(std::span<const LabeledFeature<T>> support, std::size_t ways,
                                 std::size_t shots);

/// Prepends the prototype to the token features and runs the fusion stack.
template <typename T>
FusedFeature<T> mm_fuse(const Var<T>& prototype, const Var<T>& text,
                        const EncoderStackParams<T>& fusion);

/// One encoder layer over [supports (ascending class id) ; query].
template <typename T>
AdaptedFeatures<T> task_adapt(std::span<const std::size_t> classes,
                              std::span<const Var<T>> supports, const Var<T>& query,
                              const EncoderLayerParams<T>& tlm);

template <typename T>
ClassProbabilities<T> classify(const AdaptedFeatures<T>& adapted, T temperature);

/// -log p_true.
template <typename T>
Var<T> loss_episode(const ClassProbabilities<T>& probs, std::size_t true_class);

/// Support cross-entropies averaged over N K plus the unaveraged query
/// cross-entropy. Labels are head rows in [0, C).
template <typename T>
Var<T> loss_global(std::span<const LabeledFeature<T>> support, const LabeledFeature<T>& query,
                   const Var<T>& head_w);

template <typename T>
Var<T> total_loss(const Var<T>& l1, const Var<T>& l2, const Var<T>& lambda);
template <typename T>
Var<T> total_loss(const Var<T>& l1, const Var<T>& l2, T lambda);

template <typename T>
struct EpisodeInputs {
    std::vector<LabeledFeature<T>> support;
    Var<T> query;
    /// class id -> token features s_c (L x d); required when fusion is on.
    std::map<std::size_t, Var<T>> text;
    std::size_t ways = 0;
    std::size_t shots = 0;
};

template <typename T>
struct EpisodeOutput {
    PrototypeSet<T> prototypes;
    std::vector<FusedFeature<T>> fused;  // aligned with prototypes.classes; pass-through without fusion
    AdaptedFeatures<T> adapted;
    ClassProbabilities<T> probs;
};

template <typename T>
EpisodeOutput<T> forward_episode(const EpisodeInputs<T>& inputs, const HeadParams<T>& params,
                                 const ModelConfig& config);

}  // namespace safsar
