// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "tsfo/kernels.hpp"
#include "tsfo/rng.hpp"

namespace {

tsfo::Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  tsfo::SeededRng rng(seed);
  tsfo::Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void BM_MatmulNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const tsfo::Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(tsfo::matmul_nt(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_MatmulNT)->RangeMultiplier(2)->Range(16, 128);

void BM_Int8Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const tsfo::QTensor a = tsfo::quantize_linear(random_matrix(n, n, 1), 1.0f / 127, 0);
  const tsfo::QTensor b = tsfo::quantize_linear(random_matrix(n, n, 2), 1.0f / 127, 0);
  for (auto _ : state) benchmark::DoNotOptimize(tsfo::int8_matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Int8Matmul)->RangeMultiplier(2)->Range(16, 128);

void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const tsfo::Tensor x = random_matrix(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(tsfo::softmax(x));
}
BENCHMARK(BM_Softmax)->Arg(12)->Arg(96);

void BM_LayerNorm(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const tsfo::Tensor x = random_matrix(96, d, 4);
  tsfo::Tensor gamma({d}), beta({d});
  for (std::size_t i = 0; i < d; ++i) gamma[i] = 1.0f;
  for (auto _ : state) benchmark::DoNotOptimize(tsfo::layer_norm(x, gamma, beta));
}
BENCHMARK(BM_LayerNorm)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
