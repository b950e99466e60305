// Serial reference kernels against their OpenMP counterparts.
// Shapes follow one training epoch: N x K features, K x H weights, a sparse
// normalized adjacency with ~20 entries per row.

#include <benchmark/benchmark.h>

#include <vector>

#include "ecgl/graph_store.hpp"
#include "ecgl/kernels.hpp"
#include "ecgl/rng.hpp"

namespace {

using ecgl::Matrix;
using ecgl::SparseMatrix;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    ecgl::Rng rng(seed);
    Matrix m(r, c);
    for (double& x : m.data()) x = rng.normal();
    return m;
}

SparseMatrix random_sparse(std::size_t n, std::size_t per_row, std::uint64_t seed) {
    ecgl::Rng rng(seed);
    SparseMatrix s;
    s.rows = s.cols = n;
    s.offsets.push_back(0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < per_row; ++k) {
            s.indices.push_back(static_cast<ecgl::NodeId>(rng.index(n)));
            s.values.push_back(1.0 / static_cast<double>(per_row));
        }
        s.offsets.push_back(static_cast<ecgl::EdgeOffset>(s.indices.size()));
    }
    return s;
}

template <auto Kernel>
void bm_gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, 64, 1), b = random_matrix(64, 128, 2);
    Matrix c(n, 128);
    for (auto _ : state) {
        Kernel(a, b, c);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 64 * 128));
}

template <auto Kernel>
void bm_gemm_tn(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, 64, 1), b = random_matrix(n, 128, 2);
    Matrix c(64, 128);
    for (auto _ : state) {
        Kernel(a, b, c);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 64 * 128));
}

template <auto Kernel>
void bm_spmm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const SparseMatrix s = random_sparse(n, 20, 3);
    const Matrix x = random_matrix(n, 64, 4);
    Matrix y(n, 64);
    for (auto _ : state) {
        Kernel(s, x, y);
        benchmark::DoNotOptimize(y.data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.nnz() * 64));
}

template <auto Kernel>
void bm_spmv(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const SparseMatrix s = random_sparse(n, 20, 3);
    const std::vector<double> x(n, 1.0);
    std::vector<double> y(n);
    for (auto _ : state) {
        Kernel(s, x, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.nnz()));
}

namespace k = ecgl::kernels;

BENCHMARK(bm_gemm<k::serial::gemm>)->Name("gemm/serial")->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_gemm<k::parallel::gemm>)->Name("gemm/parallel")->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(bm_gemm_tn<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_gemm_tn<k::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(bm_spmm<k::serial::spmm>)->Name("spmm/serial")->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_spmm<k::parallel::spmm>)->Name("spmm/parallel")->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(bm_spmv<k::serial::spmv>)->Name("spmv/serial")->Arg(20000)->Arg(200000)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_spmv<k::parallel::spmv>)->Name("spmv/parallel")->Arg(20000)->Arg(200000)->Unit(benchmark::kMicrosecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
