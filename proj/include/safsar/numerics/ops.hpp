#pragma once

// Forward-only tensor operations on plain values. The differentiable versions
// in autograd.hpp call into these for their forward pass.

#include "safsar/numerics/tensor.hpp"

namespace safsar {

/// layer_norm epsilon used throughout the model.
inline constexpr double kLayerNormEps = 1e-5;

/// A (m x k) * B (k x n). A may be rank 1, in which case the result is rank 1.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// A * B^T where B is stored (n x k).
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

/// Max-subtracted softmax along the last axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& v);

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& v);

/// Layer normalization along the last axis, 1/n variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = static_cast<T>(kLayerNormEps));

template <typename T>
T gelu(T x);
template <typename T>
T gelu_derivative(T x);

}  // namespace safsar
