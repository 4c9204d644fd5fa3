// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "cflow/flow.hpp"
#include "cflow/objectives.hpp"
#include "cflow/ops.hpp"
#include "cflow/training.hpp"

namespace {

using namespace cflow;

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  const auto k = state.range(1);
  Rng rng(0);
  const Tensor a = rng.normal(n, k);
  const Tensor b = rng.normal(k, k);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(t.value(matmul(t.constant(a), t.constant(b))).data());
  }
  state.SetItemsProcessed(state.iterations() * n * k * k);
}
BENCHMARK(BM_Matmul)->Args({1600, 128})->Args({1600, 512})->Unit(benchmark::kMillisecond);

void BM_DenseForwardBackward(benchmark::State& state) {
  const auto n = state.range(0);
  const auto h = state.range(1);
  ParamStore store;
  Rng rng(1);
  const ParamId w = store.add("w", rng.normal(h, h, 0.05));
  const ParamId b = store.add("b", Tensor(1, h));
  const Tensor x = rng.normal(n, h);
  for (auto _ : state) {
    Tape t;
    const Var y = dense(t.constant(x), t.param(store, w), t.param(store, b), Activation::relu);
    t.backward(mean(y), store);
  }
}
BENCHMARK(BM_DenseForwardBackward)->Args({1600, 128})->Args({1600, 512})->Unit(benchmark::kMillisecond);

void BM_CouplingForward(benchmark::State& state) {
  const auto hidden = static_cast<int>(state.range(0));
  FlowModel model(DimPlan{2, 8, 8, 2}, FlowArch{8, hidden, 2.0, true, 0});
  Rng rng(2);
  model.randomize(rng, 0.5);
  const Tensor x = rng.normal(1600, 10);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_values(x).logdet.matrix().data());
  state.SetItemsProcessed(state.iterations() * 1600);
}
BENCHMARK(BM_CouplingForward)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_CondNLLStep(benchmark::State& state) {
  const auto hidden = static_cast<int>(state.range(0));
  const auto batch = state.range(1);
  FlowModel model(DimPlan{2, 8, 8, 2}, FlowArch{8, hidden, 2.0, true, 0});
  Rng rng(3);
  model.randomize(rng, 0.1);
  const Tensor x = rng.normal(batch, 2);
  Tensor y(batch, 8);
  for (Eigen::Index i = 0; i < batch; ++i) y(i, i % 8) = 1.0;
  AdamState adam;
  for (auto _ : state) {
    Tape t;
    const Objective obj = cond_nll(model, t, x, y, CondNLLConfig{0.1, 0.05}, rng);
    t.backward(obj.total, model.params());
    adam_step(model.params(), adam);
  }
}
BENCHMARK(BM_CondNLLStep)->Args({128, 1600})->Args({512, 1600})->Unit(benchmark::kMillisecond);

void BM_MMD(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(4);
  const Tensor a = rng.normal(n, 10);
  const Tensor b = rng.normal(n, 10);
  for (auto _ : state) benchmark::DoNotOptimize(mmd(a, b, MMDConfig{}));
}
BENCHMARK(BM_MMD)->Arg(500)->Arg(1600)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
