// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "metareid/kernels.hpp"

namespace k = metareid::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::matmul<double>(a, b, c, n, n, n);
    } else {
      k::serial::matmul<double>(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <bool Parallel>
void BM_PairwiseSqdist(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 64;
  const auto x = random_values(rows * dim, 3);
  std::vector<double> out(rows * rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::pairwise_sqdist<double>(x, out, rows, dim);
    } else {
      k::serial::pairwise_sqdist<double>(x, out, rows, dim);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_CrossSqdist(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 32;
  const auto q = random_values(n * dim, 4), g = random_values(4 * n * dim, 5);
  std::vector<double> out(n * 4 * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::cross_sqdist<double>(q, g, out, n, 4 * n, dim);
    } else {
      k::serial::cross_sqdist<double>(q, g, out, n, 4 * n, dim);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_LogSumExp(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  const auto x = random_values(rows * cols, 6);
  std::vector<double> out(rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::logsumexp_rows<double>(x, out, rows, cols);
    } else {
      k::serial::logsumexp_rows<double>(x, out, rows, cols);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(128)->Arg(256)->UseRealTime();
BENCHMARK(BM_PairwiseSqdist<false>)->Name("pairwise_sqdist/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_PairwiseSqdist<true>)->Name("pairwise_sqdist/parallel")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_CrossSqdist<false>)->Name("cross_sqdist/serial")->Arg(32)->Arg(128);
BENCHMARK(BM_CrossSqdist<true>)->Name("cross_sqdist/parallel")->Arg(32)->Arg(128)->UseRealTime();
BENCHMARK(BM_LogSumExp<false>)->Name("logsumexp/serial")->Arg(256)->Arg(2048);
BENCHMARK(BM_LogSumExp<true>)->Name("logsumexp/parallel")->Arg(256)->Arg(2048)->UseRealTime();

BENCHMARK_MAIN();
