#include "safsar/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace safsar::kernels {

namespace {
// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;
}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    const bool par = m * k * n >= kParallelWork && m > 1;
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        T* ci = c + i * n;
        if (!accumulate) std::fill(ci, ci + n, T{0});
        const T* ai = a + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const T av = ai[t];
            const T* bt = b + t * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    const bool par = m * k * n >= kParallelWork && m > 1;
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* bj = b + j * k;
            T s{0};
#pragma omp simd reduction(+ : s)
            for (std::size_t t = 0; t < k; ++t) s += ai[t] * bj[t];
            ci[j] = accumulate ? ci[j] + s : s;
        }
    }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    const bool par = m * k * n >= kParallelWork && m > 1;
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        T* ci = c + i * n;
        if (!accumulate) std::fill(ci, ci + n, T{0});
        for (std::size_t t = 0; t < k; ++t) {
            const T av = a[t * m + i];
            const T* bt = b + t * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols) {
    const bool par = rows * cols >= kParallelWork && rows > 1;
    const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t r = 0; r < nrows; ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        const T mx = *std::max_element(xr, xr + cols);
        T sum{0};
        for (std::size_t j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        const T inv = T{1} / sum;
        for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
    }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T eps, T* y, T* normalized,
                     T* inv_std, std::size_t rows, std::size_t cols) {
    const bool par = rows * cols >= kParallelWork && rows > 1;
    const auto nrows = static_cast<std::ptrdiff_t>(rows);
    const T n = static_cast<T>(cols);
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t r = 0; r < nrows; ++r) {
        const T* xr = x + r * cols;
        T mean{0};
        for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
        mean /= n;
        T var{0};
        for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= n;
        const T is = T{1} / std::sqrt(var + eps);
        inv_std[r] = is;
        T* zr = normalized + r * cols;
        T* yr = y + r * cols;
        for (std::size_t j = 0; j < cols; ++j) {
            zr[j] = (xr[j] - mean) * is;
            yr[j] = gain[j] * zr[j] + bias[j];
        }
    }
}

namespace reference {

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T s{0};
            for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T s{0};
            for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T s{0};
            for (std::size_t t = 0; t < k; ++t) s += a[t * m + i] * b[t * n + j];
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        T mx = x[r * cols];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
        T sum{0};
        for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[r * cols + j] - mx);
        for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = std::exp(x[r * cols + j] - mx) / sum;
    }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T eps, T* y, T* normalized,
                     T* inv_std, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        T mean{0};
        for (std::size_t j = 0; j < cols; ++j) mean += x[r * cols + j];
        mean /= static_cast<T>(cols);
        T var{0};
        for (std::size_t j = 0; j < cols; ++j) {
            const T dx = x[r * cols + j] - mean;
            var += dx * dx;
        }
        var /= static_cast<T>(cols);
        inv_std[r] = T{1} / std::sqrt(var + eps);
        for (std::size_t j = 0; j < cols; ++j) {
            normalized[r * cols + j] = (x[r * cols + j] - mean) * inv_std[r];
            y[r * cols + j] = gain[j] * normalized[r * cols + j] + bias[j];
        }
    }
}

}  // namespace reference
}  // namespace safsar::kernels

#define SAFSAR_INSTANTIATE_KERNELS(NS, T)                                                        \
    template void NS::matmul_nn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                                   bool);                                                        \
    template void NS::matmul_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                                   bool);                                                        \
    template void NS::matmul_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                                   bool);                                                        \
    template void NS::softmax_rows<T>(const T*, T*, std::size_t, std::size_t);                   \
    template void NS::layer_norm_rows<T>(const T*, const T*, const T*, T, T*, T*, T*,            \
                                         std::size_t, std::size_t);

SAFSAR_INSTANTIATE_KERNELS(safsar::kernels, float)
SAFSAR_INSTANTIATE_KERNELS(safsar::kernels, double)
SAFSAR_INSTANTIATE_KERNELS(safsar::kernels::reference, float)
SAFSAR_INSTANTIATE_KERNELS(safsar::kernels::reference, double)

#undef SAFSAR_INSTANTIATE_KERNELS
