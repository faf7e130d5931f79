#include "safsar/numerics/ops.hpp"

#include <cmath>
#include <numbers>

#include "safsar/numerics/kernels.hpp"

namespace safsar {

namespace {

template <typename T>
Shape product_shape(const Tensor<T>& a, std::size_t n) {
    if (a.rank() == 1) return {n};
    return {a.rows(), n};
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(what) + " expects a matrix operand, got " +
                             shape_str(t.shape()));
    }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_matrix(b, "matmul");
    if (a.empty() || a.rank() > 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: inner extents disagree for " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    }
    Tensor<T> c(product_shape(a, b.cols()));
    kernels::matmul_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    return c;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    require_matrix(b, "matmul_nt");
    if (a.empty() || a.rank() > 2 || a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: inner extents disagree for " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()) + "^T");
    }
    Tensor<T> c(product_shape(a, b.rows()));
    kernels::matmul_nt(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows());
    return c;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& v) {
    if (v.empty()) throw DomainError("softmax of an empty vector");
    Tensor<T> out(v.shape());
    kernels::softmax_rows(v.data(), out.data(), v.rows(), v.cols());
    return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& v) {
    if (v.empty()) throw DomainError("log_softmax of an empty vector");
    Tensor<T> out(v.shape());
    const std::size_t cols = v.cols();
    for (std::size_t r = 0; r < v.rows(); ++r) {
        auto x = v.row(r);
        T mx = x[0];
        for (T e : x) mx = std::max(mx, e);
        T sum{0};
        for (T e : x) sum += std::exp(e - mx);
        const T lse = mx + std::log(sum);
        for (std::size_t j = 0; j < cols; ++j) out(r, j) = x[j] - lse;
    }
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    if (gain.size() != x.cols() || bias.size() != x.cols()) {
        throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                             shape_str(bias.shape()) + " do not match input " +
                             shape_str(x.shape()));
    }
    if (!(eps > T{0})) throw DomainError("layer_norm: eps must be positive");
    Tensor<T> y(x.shape());
    Tensor<T> z(x.shape());
    std::vector<T> inv_std(x.rows());
    kernels::layer_norm_rows(x.data(), gain.data(), bias.data(), eps, y.data(), z.data(),
                             inv_std.data(), x.rows(), x.cols());
    return y;
}

template <typename T>
T gelu(T x) {
    return T{0.5} * x * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_derivative(T x) {
    const T cdf = T{0.5} * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T{-0.5} * x * x) / std::sqrt(T{2} * std::numbers::pi_v<T>);
    return cdf + x * pdf;
}

#define SAFSAR_INSTANTIATE_OPS(T)                                                           \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> softmax<T>(const Tensor<T>&);                                        \
    template Tensor<T> log_softmax<T>(const Tensor<T>&);                                    \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
    template T gelu<T>(T);                                                                  \
    template T gelu_derivative<T>(T);

SAFSAR_INSTANTIATE_OPS(float)
SAFSAR_INSTANTIATE_OPS(double)

}  // namespace safsar
