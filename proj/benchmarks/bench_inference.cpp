// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

// Single-instance latency of the float, INT8 and pruned inference paths on
// an untrained model; weights do not affect the amount of work.

#include <benchmark/benchmark.h>

#include <vector>

#include "tsfo/model.hpp"
#include "tsfo/pruning.hpp"
#include "tsfo/quantization.hpp"

namespace {

struct Fixture {
  tsfo::TransformerModel model;
  std::vector<tsfo::Tensor> inputs;
};

Fixture make_fixture(const std::string& preset) {
  tsfo::ModelConfig cfg = tsfo::preset_config(preset);
  cfg.seq_len = 96;
  cfg.input_channels = 1;
  cfg.num_classes = 3;
  cfg.patch_size = 8;
  cfg.patch_stride = 8;
  tsfo::SeededRng rng(11);
  Fixture f{tsfo::build_model(cfg, rng), {}};
  for (int i = 0; i < 16; ++i) {
    tsfo::Tensor x({1, 96});
    for (std::size_t t = 0; t < 96; ++t) x[t] = static_cast<float>(rng.uniform());
    f.inputs.push_back(std::move(x));
  }
  return f;
}

const Fixture& fixture(int which) {
  static const Fixture tiny = make_fixture("tiny");
  static const Fixture t1 = make_fixture("T1");
  return which == 0 ? tiny : t1;
}

void BM_ForwardFloat(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(tsfo::forward(f.model, f.inputs[i++ % f.inputs.size()]));
}
BENCHMARK(BM_ForwardFloat)->Arg(0)->Arg(1);

void BM_ForwardStaticInt8(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  const tsfo::QuantizedModel q = tsfo::quantize_static(f.model, tsfo::calibrate(f.model, f.inputs));
  const tsfo::QuantizedInference inference(q);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(inference.forward(f.inputs[i++ % f.inputs.size()]));
}
BENCHMARK(BM_ForwardStaticInt8)->Arg(0)->Arg(1);

void BM_ForwardDynamicInt8(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  const tsfo::QuantizedInference inference(tsfo::quantize_weights(f.model), tsfo::ActivationQuant::kDynamic);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(inference.forward(f.inputs[i++ % f.inputs.size()]));
}
BENCHMARK(BM_ForwardDynamicInt8)->Arg(0)->Arg(1);

void BM_ForwardStructuredPruned(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  tsfo::PruneSpec spec{tsfo::PruneMethod::kL2, tsfo::Granularity::kNeuron, tsfo::PruneScope::kLayerwise, 0.4,
                       std::nullopt};
  tsfo::TransformerModel m = tsfo::prune_structured(f.model, spec).model;
  spec.granularity = tsfo::Granularity::kHead;
  m = tsfo::prune_structured(m, spec).model;
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(tsfo::forward(m, f.inputs[i++ % f.inputs.size()]));
}
BENCHMARK(BM_ForwardStructuredPruned)->Arg(0)->Arg(1);

}  // namespace
