#include <cmath>

#include "safsar/episodic/pipeline.hpp"

namespace safsar {

void Adam::step(ParamStore<float>& store, const std::map<std::string, Tensor<float>>& grads) {
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (auto& e : store.entries()) {
        if (e.frozen) continue;
        auto g = grads.find(e.name);
        if (g == grads.end()) continue;
        if (g->second.size() != e.value.size()) {
            throw DimensionError("gradient of '" + e.name + "' has shape " +
                                 shape_str(g->second.shape()) + ", parameter " +
                                 shape_str(e.value.shape()));
        }
        auto& [m, v] = moments_[e.name];
        if (m.empty()) {
            m.assign(e.value.size(), 0.0);
            v.assign(e.value.size(), 0.0);
        }
        auto p = e.value.values();
        const auto& gv = g->second.values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = gv[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            const double update = config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
            p[i] = static_cast<float>(static_cast<double>(p[i]) - update);
        }
    }
}

namespace {

bool val_usable(const Dataset& data, const TrainConfig& config) {
    SplitView val = SplitView::of(data, Split::val);
    if (val.classes.empty()) return false;
    try {
        check_capacity(val, config.ways, config.shots);
    } catch (const CapacityError&) {
        return false;
    }
    return true;
}

}  // namespace

TrainResult train(const Dataset& data, Model model, const TrainConfig& config,
                  const StepCallback& on_step) {
    if (config.ways < 2) throw ConfigError("training episodes need N >= 2");
    if (config.shots < 1) throw ConfigError("training episodes need K >= 1");
    if (!(config.adam.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (data.kind != model.input) throw ContractError("dataset kind does not match the model input");
    if (data.split_classes(Split::train) != model.train_classes) {
        throw ContractError("train split classes differ from the classes of the global head");
    }
    const SplitView view = SplitView::of(data, Split::train);
    if (view.classes.empty()) throw CapacityError("train split is empty");
    check_capacity(view, config.ways, config.shots);

    const auto text_cache = class_text_features(model, data);
    const bool use_val = config.val_every > 0 && val_usable(data, config);
    const std::uint64_t episode_seed = derive_seed(config.seed, "train.episodes");
    const std::uint64_t augment_seed = derive_seed(config.seed, "train.augment");
    const std::uint64_t val_seed = derive_seed(config.seed, "train.val");

    TrainResult result;
    Adam adam(config.adam);
    std::optional<ParamStore<float>> best;
    double best_acc = -1.0;

    Tape<float> tape;
    for (std::size_t e = 0; e < config.episodes; ++e) {
        const std::size_t draw = config.repeat_first_episode ? 0 : e;
        Rng rng(derive_seed(episode_seed, draw));
        const Episode episode = sample_episode(view, config.ways, config.shots, rng, draw);

        tape.reset();
        ParamBinding<float> bind(tape, model.params, true);
        HeadParams<float> head = bind_head(bind, model.config.shape.heads);
        Rng aug(derive_seed(augment_seed, draw));
        Rng* aug_ptr = model.input == Dataset::Kind::clips ? &aug : nullptr;
        std::map<std::size_t, Var<float>> features;
        for (const auto& ref : episode.support) {
            features.emplace(ref.item, item_feature(bind, model, data, ref.item, aug_ptr));
        }
        features.emplace(episode.query.item, item_feature(bind, model, data, episode.query.item, aug_ptr));
        std::map<std::size_t, Var<float>> text;
        for (std::size_t cls : episode.classes) {
            auto it = text_cache.find(cls);
            if (it != text_cache.end()) text.emplace(cls, tape.constant(it->second));
        }

        EpisodeLosses<float> losses = episode_losses(model, head, episode, features, text);
        LossRecord rec;
        rec.episode = e;
        rec.l1 = losses.l1.value().item();
        rec.l2 = losses.l2.valid() ? losses.l2.value().item() : 0.0;
        rec.total = losses.total.value().item();
        if (!std::isfinite(rec.total)) {
            throw DivergedError(e, "training diverged: non-finite loss at episode " + std::to_string(e));
        }
        auto grads = bind.gradients(tape.backward(losses.total));
        adam.step(model.params, grads);
        result.trace.push_back(rec);
        if (on_step) on_step(rec);

        if (use_val && (e + 1) % config.val_every == 0) {
            EvalConfig ec;
            ec.split = Split::val;
            ec.ways = config.ways;
            ec.shots = config.shots;
            ec.episodes = config.val_episodes;
            ec.seed = val_seed;
            const double acc = evaluate(data, model, ec).accuracy;
            result.val_history.emplace_back(e + 1, acc);
            if (acc > best_acc) {
                best_acc = acc;
                best = model.params;
                result.selected_at = e + 1;
            }
        }
    }
    if (best) model.params = std::move(*best);
    result.model = std::move(model);
    return result;
}

}  // namespace safsar
