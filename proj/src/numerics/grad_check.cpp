#include "safsar/numerics/grad_check.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

namespace safsar {

namespace {

template <typename T>
bool bit_equal(T a, T b) {
    return std::memcmp(&a, &b, sizeof(T)) == 0;
}

std::vector<std::size_t> probe_indices(std::size_t size, std::size_t wanted, Rng& rng) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (wanted == 0 || wanted >= size) return idx;
    shuffle(idx.begin(), idx.end(), rng);
    idx.resize(wanted);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

template <typename T>
T evaluate_objective(const Objective<T>& objective, const ParamStore<T>& params) {
    Tape<T> tape;
    ParamBinding<T> bind(tape, params, false);
    return objective(bind).value().item();
}

template <typename T>
std::map<std::string, Tensor<T>> objective_gradients(const Objective<T>& objective,
                                                     const ParamStore<T>& params) {
    Tape<T> tape;
    ParamBinding<T> bind(tape, params, true);
    Var<T> loss = objective(bind);
    return bind.gradients(tape.backward(loss));
}

template <typename T>
GradCheckReport grad_check(const ValueFn<T>& value, const AnalyticGradFn<T>& analytic,
                           ParamStore<T>& params, T epsilon, const GradCheckOptions& options) {
    if (!(epsilon > T{0})) throw DomainError("grad_check epsilon must be positive");
    const T base = value(params);
    if (!bit_equal(base, value(params))) {
        throw GradCheckInvalid("objective is not deterministic: repeated evaluation differs");
    }
    const auto grads = analytic(params);

    GradCheckReport report;
    Rng rng(options.seed);
    for (auto& e : params.entries()) {
        if (e.frozen || !std::string_view(e.name).starts_with(options.prefix)) continue;
        const auto it = grads.find(e.name);
        double worst = 0.0;
        for (std::size_t i : probe_indices(e.value.size(), options.coords_per_tensor, rng)) {
            const T saved = e.value[i];
            e.value[i] = saved + epsilon;
            const T up = value(params);
            e.value[i] = saved - epsilon;
            const T down = value(params);
            e.value[i] = saved;
            const double numeric = (static_cast<double>(up) - static_cast<double>(down)) /
                                   (2.0 * static_cast<double>(epsilon));
            const double a = it == grads.end() ? 0.0 : static_cast<double>(it->second[i]);
            const double rel = relative_error(a, numeric);
            ++report.coords_checked;
            worst = std::max(worst, rel);
            if (report.worst_param.empty() || rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = e.name;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
        report.per_param[e.name] = worst;
    }
    if (!bit_equal(base, value(params))) {
        throw GradCheckInvalid("objective changed across probe evaluations");
    }
    return report;
}

template <typename T>
GradCheckReport grad_check(const Objective<T>& objective, ParamStore<T>& params, T epsilon,
                           const GradCheckOptions& options) {
    return grad_check<T>(
        [&](const ParamStore<T>& p) { return evaluate_objective(objective, p); },
        [&](const ParamStore<T>& p) { return objective_gradients(objective, p); }, params,
        epsilon, options);
}

#define SAFSAR_INSTANTIATE_GRADCHECK(T)                                                        \
    template T evaluate_objective<T>(const Objective<T>&, const ParamStore<T>&);               \
    template std::map<std::string, Tensor<T>> objective_gradients<T>(const Objective<T>&,      \
                                                                     const ParamStore<T>&);    \
    template GradCheckReport grad_check<T>(const ValueFn<T>&, const AnalyticGradFn<T>&,        \
                                           ParamStore<T>&, T, const GradCheckOptions&);        \
    template GradCheckReport grad_check<T>(const Objective<T>&, ParamStore<T>&, T,             \
                                           const GradCheckOptions&);

SAFSAR_INSTANTIATE_GRADCHECK(float)
SAFSAR_INSTANTIATE_GRADCHECK(double)

}  // namespace safsar
