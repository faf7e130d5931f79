#include <algorithm>
#include <cmath>
#include <exception>

#include <omp.h>

#include "safsar/episodic/pipeline.hpp"

namespace safsar {

double ci95_half_width(double accuracy, std::size_t episodes) {
    if (episodes == 0) throw DomainError("confidence interval over zero episodes");
    return 1.96 * std::sqrt(accuracy * (1.0 - accuracy) / static_cast<double>(episodes));
}

namespace {

// Runs body(i) for i in [0, n) on `workers` threads; rethrows the first failure.
template <typename Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
    const int threads = workers == 0 ? omp_get_max_threads() : static_cast<int>(workers);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(safsar_eval_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

EvalReport evaluate(const Dataset& data, const Model& model, const EvalConfig& config) {
    if (config.episodes == 0) throw DomainError("evaluation needs E >= 1 episodes");
    data.validate();
    const SplitView view = SplitView::of(data, config.split);
    check_capacity(view, config.ways, config.shots);
    if (config.split != Split::train) {
        for (std::size_t cls : view.classes) {
            if (std::binary_search(model.train_classes.begin(), model.train_classes.end(), cls)) {
                throw ContractError("class " + std::to_string(cls) + " of the " +
                                    std::string(split_name(config.split)) +
                                    " split was seen in training");
            }
        }
    }

    std::map<std::size_t, Tensor<float>> text_cache;
    std::vector<Tensor<float>> item_features(data.items.size());
    if (!config.random_predictor) {
        if (data.kind != model.input) throw ContractError("dataset kind does not match the model input");
        text_cache = class_text_features(model, data);
        std::vector<std::size_t> todo;
        for (const auto& items : view.items) todo.insert(todo.end(), items.begin(), items.end());
        parallel_for(todo.size(), config.workers, [&](std::size_t i) {
            Tape<float> tape;
            ParamBinding<float> bind(tape, model.params, false);
            item_features[todo[i]] = item_feature(bind, model, data, todo[i], nullptr).value();
        });
    }

    EvalReport report;
    report.episodes = config.episodes;
    report.ways = config.ways;
    report.shots = config.shots;
    report.seed = config.seed;
    report.split = std::string(split_name(config.split));
    report.random_predictor = config.random_predictor;
    report.correct.assign(config.episodes, 0);

    parallel_for(config.episodes, config.workers, [&](std::size_t e) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(e)));
        const Episode ep = sample_episode(view, config.ways, config.shots, rng, e);
        std::size_t predicted;
        if (config.random_predictor) {
            predicted = ep.classes[uniform_index(rng, ep.classes.size())];
        } else {
            Tape<float> tape;
            ParamBinding<float> bind(tape, model.params, false);
            HeadParams<float> head = bind_head(bind, model.config.shape.heads);
            std::map<std::size_t, Var<float>> features;
            for (const auto& ref : ep.support) features.emplace(ref.item, tape.constant(item_features[ref.item]));
            features.emplace(ep.query.item, tape.constant(item_features[ep.query.item]));
            std::map<std::size_t, Var<float>> text;
            for (std::size_t cls : ep.classes) {
                auto it = text_cache.find(cls);
                if (it != text_cache.end()) text.emplace(cls, tape.constant(it->second));
            }
            auto out = forward_episode(episode_inputs(ep, config.shots, features, text), head,
                                       model.config.model);
            predicted = out.probs.argmax();
        }
        report.correct[e] = predicted == ep.query.class_id ? 1 : 0;
    });

    std::size_t hits = 0;
    for (auto c : report.correct) hits += c;
    report.accuracy = static_cast<double>(hits) / static_cast<double>(config.episodes);
    report.ci95 = ci95_half_width(report.accuracy, config.episodes);
    return report;
}

}  // namespace safsar
