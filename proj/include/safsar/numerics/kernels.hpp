#pragma once

// Dense inner-loop kernels. The top-level namespace holds the OpenMP versions
// used by the library; `reference` holds plain serial loops that tests and the
// benchmark compare against. Both families share signatures.
//
// Matrices are row-major. Every matmul writes C (m x n); with `accumulate`
// the product is added to the existing contents of C.

#include <cstddef>

namespace safsar::kernels {

/// C = A (m x k) * B (k x n)
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);

/// C = A (m x k) * B^T, with B stored n x k
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);

/// C = A^T * B, with A stored k x m and B stored k x n
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);

/// Row-wise max-subtracted softmax over an (rows x cols) block.
template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols);

/// Row-wise layer normalization with 1/n variance. `inv_std` receives one value per row.
template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T eps, T* y, T* normalized,
                     T* inv_std, std::size_t rows, std::size_t cols);

namespace reference {

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);
template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols);
template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T eps, T* y, T* normalized,
                     T* inv_std, std::size_t rows, std::size_t cols);

}  // namespace reference

/// Threads the parallel kernels may use (omp_get_max_threads, or 1 without OpenMP).
int max_threads();

}  // namespace safsar::kernels
