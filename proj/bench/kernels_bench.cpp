// Parallel kernels against their serial references.
// Shapes follow the model: token blocks of n x 64 with a 256-wide FFN.

#include <benchmark/benchmark.h>

#include <vector>

#include "safsar/numerics/kernels.hpp"
#include "safsar/numerics/rng.hpp"

namespace k = safsar::kernels;

namespace {

std::vector<float> random_block(std::size_t n, std::uint64_t seed) {
    safsar::Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(safsar::uniform(rng, -1.0, 1.0));
    return v;
}

using MatmulFn = void (*)(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);

template <MatmulFn Fn>
void bm_matmul(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const std::size_t kk = 64, n = 256;
    const auto a = random_block(m * kk, 1), b = random_block(kk * n, 2);
    std::vector<float> c(m * n);
    for (auto _ : state) {
        Fn(a.data(), b.data(), c.data(), m, kk, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * kk * n));
}

template <void (*Fn)(const float*, float*, std::size_t, std::size_t)>
void bm_softmax(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = rows;
    const auto x = random_block(rows * cols, 3);
    std::vector<float> y(rows * cols);
    for (auto _ : state) {
        Fn(x.data(), y.data(), rows, cols);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

template <void (*Fn)(const float*, const float*, const float*, float, float*, float*, float*, std::size_t,
                     std::size_t)>
void bm_layer_norm(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = 64;
    const auto x = random_block(rows * cols, 4), gain = random_block(cols, 5), bias = random_block(cols, 6);
    std::vector<float> y(rows * cols), normalized(rows * cols), inv_std(rows);
    for (auto _ : state) {
        Fn(x.data(), gain.data(), bias.data(), 1e-5f, y.data(), normalized.data(), inv_std.data(), rows, cols);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

}  // namespace

BENCHMARK(bm_matmul<k::matmul_nn<float>>)->Name("matmul_nn/parallel")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(bm_matmul<k::reference::matmul_nn<float>>)->Name("matmul_nn/reference")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(bm_matmul<k::matmul_nt<float>>)->Name("matmul_nt/parallel")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(bm_matmul<k::reference::matmul_nt<float>>)->Name("matmul_nt/reference")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(bm_matmul<k::matmul_tn<float>>)->Name("matmul_tn/parallel")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(bm_matmul<k::reference::matmul_tn<float>>)->Name("matmul_tn/reference")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(bm_softmax<k::softmax_rows<float>>)->Name("softmax_rows/parallel")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(bm_softmax<k::reference::softmax_rows<float>>)->Name("softmax_rows/reference")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(bm_layer_norm<k::layer_norm_rows<float>>)->Name("layer_norm_rows/parallel")->RangeMultiplier(4)->Range(16, 4096);
BENCHMARK(bm_layer_norm<k::reference::layer_norm_rows<float>>)->Name("layer_norm_rows/reference")->RangeMultiplier(4)->Range(16, 4096);

BENCHMARK_MAIN();
