// Serial reference vs OpenMP kernels on desk-scale shapes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "svat/kernels.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    const svat::kernels::MatView av{a.data(), n, n};
    const svat::kernels::MatView bv{b.data(), n, n};
    const svat::kernels::MutMatView ov{out.data(), n, n};
    if constexpr (Parallel) {
      svat::kernels::parallel::gemm(av, bv, ov);
    } else {
      svat::kernels::serial::gemm(av, bv, ov);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <bool Parallel>
void BM_PairwiseHinge(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto s = random_values(n, 3);
  const auto y = random_values(n, 4);
  std::vector<double> out(n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      svat::kernels::parallel::pairwise_hinge_rows(s, y, out);
    } else {
      svat::kernels::serial::pairwise_hinge_rows(s, y, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

template <bool Parallel>
void BM_RankAgainst(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto clean = random_values(n, 5);
  const auto probe = random_values(1000, 6);
  std::vector<int> ranks(probe.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      svat::kernels::parallel::rank_against(clean, 0, probe, ranks);
    } else {
      svat::kernels::serial::rank_against(clean, 0, probe, ranks);
    }
    benchmark::DoNotOptimize(ranks.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_PairwiseHinge<false>)->Arg(100)->Arg(1000)->Arg(4000);
BENCHMARK(BM_PairwiseHinge<true>)->Arg(100)->Arg(1000)->Arg(4000);
BENCHMARK(BM_RankAgainst<false>)->Arg(100)->Arg(1000);
BENCHMARK(BM_RankAgainst<true>)->Arg(100)->Arg(1000);

BENCHMARK_MAIN();
