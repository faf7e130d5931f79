#pragma once

#include <functional>
#include <map>
#include <string>

#include "safsar/numerics/param_store.hpp"

namespace safsar {

struct GradCheckOptions {
    /// Coordinates probed per trainable tensor; 0 probes every coordinate.
    std::size_t coords_per_tensor = 0;
    /// Seed for choosing which coordinates to probe.
    std::uint64_t seed = 0;
    /// Only parameters whose names start with this prefix are probed.
    std::string prefix;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coords_checked = 0;
    /// Largest relative error per probed parameter.
    std::map<std::string, double> per_param;

    bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

/// Scalar objective recorded on the binding's tape.
template <typename T>
using Objective = std::function<Var<T>(ParamBinding<T>&)>;

template <typename T>
using ValueFn = std::function<T(const ParamStore<T>&)>;

template <typename T>
using AnalyticGradFn = std::function<std::map<std::string, Tensor<T>>(const ParamStore<T>&)>;

/// Central-difference check of an explicit analytic gradient against a value
/// function. Throws GradCheckInvalid if two evaluations at the same point differ.
template <typename T>
GradCheckReport grad_check(const ValueFn<T>& value, const AnalyticGradFn<T>& analytic,
                           ParamStore<T>& params, T epsilon, const GradCheckOptions& options = {});

/// Checks the tape gradient of `objective` over every trainable parameter.
template <typename T>
GradCheckReport grad_check(const Objective<T>& objective, ParamStore<T>& params, T epsilon,
                           const GradCheckOptions& options = {});

/// Evaluates the objective once without recording gradients.
template <typename T>
T evaluate_objective(const Objective<T>& objective, const ParamStore<T>& params);

/// Analytic gradients of the objective, keyed by parameter name.
template <typename T>
std::map<std::string, Tensor<T>> objective_gradients(const Objective<T>& objective,
                                                     const ParamStore<T>& params);

}  // namespace safsar
