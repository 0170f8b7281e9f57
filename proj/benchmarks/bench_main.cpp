// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "revft/analysis.hpp"
#include "revft/ops.hpp"
#include "revft/train.hpp"

namespace revft {
namespace {

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(0);
  const Tensor a = gaussian_fill({n, n}, 0.0, 1.0, rng, Precision::kSingle);
  const Tensor b = gaussian_fill({n, n}, 0.0, 1.0, rng, Precision::kSingle);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

MeftModel bench_model(std::size_t depth) {
  ModelConfig c;
  c.dims = {64, 4, 32, 32, 0, false};
  c.plan = {0, depth, 0};
  c.precision = Precision::kSingle;
  Rng rng(0);
  return assemble_model(c, rng);
}

TokenBatch bench_tokens() {
  TokenBatch t{4, 32, {}};
  for (std::size_t i = 0; i < 128; ++i) t.ids.push_back(static_cast<std::int32_t>(i % 32));
  return t;
}

// Forward + backward of a fully reversible stack; arg 1 selects the cache mode.
void BM_ForwardBackward(benchmark::State& state) {
  MeftModel m = bench_model(static_cast<std::size_t>(state.range(0)));
  const CacheMode mode = state.range(1) ? CacheMode::kReversible : CacheMode::kVanilla;
  const TokenBatch t = bench_tokens();
  Rng rng(1);
  const Tensor dlogits = gaussian_fill({4, 2}, 0.0, 1.0, rng, Precision::kSingle);
  for (auto _ : state) {
    zero_grads(m.params());
    const ForwardResult fr = model_forward(m, t, mode);
    benchmark::DoNotOptimize(model_backward(m, fr.record, dlogits));
  }
  const MemoryLedger l = memory_ledger_capture(m, t, mode);
  state.counters["persistent_bytes"] = static_cast<double>(l.persistent_total());
  state.counters["peak_transient_bytes"] = static_cast<double>(l.peak_transient_bytes);
}
BENCHMARK(BM_ForwardBackward)->ArgsProduct({{4, 8}, {0, 1}})->ArgNames({"depth", "reversible"});

void BM_TrainStep(benchmark::State& state) {
  MeftModel m = bench_model(4);
  MeftTarget target(m, CacheMode::kReversible);
  TaskSpec spec;
  spec.vocab = 32;
  spec.seq = 32;
  spec.n_train = 16;
  spec.n_dev = 1;
  const Dataset data = generate_synthetic_task(spec);
  std::vector<std::size_t> idx(16);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Batch batch = make_batch(data.train, idx, false);
  const ParamList trainable = m.trainable_params();
  AdamState adam;
  for (auto _ : state) {
    zero_grads(trainable);
    benchmark::DoNotOptimize(target.train_step_loss(batch));
    GradientSet grads = snapshot_grads(trainable);
    clip_grad_norm(grads, 1.0);
    adam_step(adam, trainable, grads, 1e-3);
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace
}  // namespace revft

BENCHMARK_MAIN();
