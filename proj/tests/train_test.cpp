// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "revft/analysis.hpp"
#include "revft/ops.hpp"
#include "revft/train.hpp"

namespace revft {
namespace {

constexpr Precision kD = Precision::kDouble;

TEST(Adam, TwoStepsMatchReference) {
  // Reference trajectory computed independently for x0 = 1, g = 2 then -1,
  // lr = 0.1, weight decay 0.1, default betas.
  Param w(Tensor::from_values({1}, {1.0}, kD), true);
  const ParamList params{{"w", &w}};
  AdamState state{AdamConfig{}, {}, {}, 0};
  adam_step(state, params, {{"w", Tensor::from_values({1}, {2.0}, kD)}}, 0.1);
  EXPECT_NEAR(w.value.get(0), 0.8900000004999999, 1e-15);
  adam_step(state, params, {{"w", Tensor::from_values({1}, {-1.0}, kD)}}, 0.1);
  EXPECT_NEAR(w.value.get(0), 0.8544662966974315, 1e-15);
  EXPECT_EQ(state.t, 2u);
}

TEST(Adam, FrozenUntouchedAndMismatchRejected) {
  Param w(Tensor::from_values({2}, {1.0, 2.0}, kD), false);
  const ParamList params{{"w", &w}};
  AdamState state{AdamConfig{}, {}, {}, 0};
  adam_step(state, params, {{"w", Tensor::from_values({2}, {5.0, 5.0}, kD)}}, 0.1);
  EXPECT_EQ(w.value.to_doubles(), (std::vector<double>{1.0, 2.0}));
  EXPECT_THROW(adam_step(state, params, {{"v", Tensor::from_values({2}, {1.0, 1.0}, kD)}}, 0.1), Error);
  EXPECT_THROW(adam_step(state, params, {{"w", Tensor::from_values({2}, {NAN, 1.0}, kD)}}, 0.1), Error);
}

TEST(Clip, ScalesToMaxNorm) {
  GradientSet g{{"a", Tensor::from_values({2}, {3.0, 4.0}, kD)}};
  EXPECT_EQ(global_norm(g), 5.0);
  EXPECT_EQ(clip_grad_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0].value.get(0), 0.6, 1e-15);
  EXPECT_NEAR(g[0].value.get(1), 0.8, 1e-15);
  EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
  EXPECT_NEAR(clip_grad_norm(g, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(g[0].value.get(0), 0.6, 1e-15);  // below the cap: unchanged
}

TEST(Schedule, WarmupThenLinearDecay) {
  // 100 steps, 6% warmup -> 6 warmup steps, decay over the remaining 94.
  EXPECT_EQ(lr_schedule(0, 100, 0.06, 1.0), 0.0);
  EXPECT_EQ(lr_schedule(3, 100, 0.06, 2.0), 1.0);
  EXPECT_EQ(lr_schedule(6, 100, 0.06, 2.0), 2.0);
  EXPECT_EQ(lr_schedule(53, 100, 0.06, 2.0), 2.0 * 47.0 / 94.0);
  EXPECT_EQ(lr_schedule(100, 100, 0.06, 2.0), 0.0);
  EXPECT_EQ(lr_schedule(0, 10, 0.0, 3.0), 3.0);
  EXPECT_THROW(lr_schedule(0, 0, 0.06, 1.0), Error);
  EXPECT_THROW(lr_schedule(0, 10, 1.0, 1.0), Error);
}

TEST(Loss, CrossEntropyExamples) {
  const Tensor logits = Tensor::from_values({2, 2}, {0.0, 0.0, std::log(3.0), 0.0}, kD);
  const std::vector<std::int32_t> targets{0, 1};
  const LossResult r = cross_entropy_loss(logits, targets);
  EXPECT_NEAR(r.loss, 1.5 * std::log(2.0), 1e-15);
  const std::vector<double> expected{-0.25, 0.25, 0.375, -0.375};
  const auto got = r.dlogits.to_doubles();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], expected[i], 1e-15) << i;
  EXPECT_EQ(accuracy(logits, targets), 0.5);
  EXPECT_THROW(cross_entropy_loss(logits, std::vector<std::int32_t>{0}), Error);
  EXPECT_THROW(cross_entropy_loss(logits, std::vector<std::int32_t>{0, 2}), Error);
}

TEST(Loss, LargeLogitsStayFinite) {
  const Tensor logits = Tensor::from_values({1, 3}, {1000.0, 0.0, -1000.0}, kD);
  const LossResult r = cross_entropy_loss(logits, std::vector<std::int32_t>{0});
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_TRUE(std::isfinite(cross_entropy_loss(logits, std::vector<std::int32_t>{2}).loss));
}

TEST(Data, ParityLabels) {
  TaskSpec spec;
  spec.n_train = 200;
  const Dataset ds = generate_synthetic_task(spec);
  EXPECT_EQ(ds.classes, 2u);
  EXPECT_EQ(ds.train.size(), 200u);
  EXPECT_EQ(ds.dev.size(), spec.n_dev);
  for (const Example& e : ds.train) {
    ASSERT_EQ(e.tokens.size(), spec.seq);
    int sum = 0;
    for (auto t : e.tokens) {
      EXPECT_LT(static_cast<std::size_t>(t), spec.vocab);
      sum += t;
    }
    EXPECT_EQ(e.label, sum % 2);
  }
}

TEST(Data, DeterministicPerSeed) {
  TaskSpec spec;
  spec.kind = TaskKind::kSynthLm;
  const Dataset a = generate_synthetic_task(spec);
  const Dataset b = generate_synthetic_task(spec);
  spec.seed = 1;
  const Dataset c = generate_synthetic_task(spec);
  ASSERT_EQ(a.train.size(), b.train.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].tokens, b.train[i].tokens);
    EXPECT_EQ(a.train[i].tokens.size(), spec.seq + 1);
    differs |= a.train[i].tokens != c.train[i].tokens;
  }
  EXPECT_TRUE(differs);
}

TEST(Data, LmBatchShiftsTargets) {
  const std::vector<Example> ex{{{1, 2, 3, 4}, 0}, {{5, 6, 7, 8}, 0}};
  const std::vector<std::size_t> idx{1, 0};
  const Batch b = make_batch(ex, idx, true);
  EXPECT_EQ(b.tokens.seq, 3u);
  EXPECT_EQ(b.tokens.ids, (std::vector<std::int32_t>{5, 6, 7, 1, 2, 3}));
  EXPECT_EQ(b.targets, (std::vector<std::int32_t>{6, 7, 8, 2, 3, 4}));
}

TEST(Data, JsonlRoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "revft_train_test.jsonl").string();
  const std::vector<Example> ex{{{1, 2, 3}, 1}, {{0, 0, 2}, 0}, {{3, 3, 3}, 2}};
  write_jsonl(path, ex, true);
  TaskSpec spec;
  spec.kind = TaskKind::kJsonl;
  spec.path = path;
  spec.vocab = 4;
  spec.seq = 3;
  spec.n_train = 2;
  spec.n_dev = 1;
  const std::vector<Example> back = read_jsonl(path, spec);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].tokens, ex[i].tokens);
    EXPECT_EQ(back[i].label, ex[i].label);
  }
  EXPECT_EQ(generate_synthetic_task(spec).classes, 3u);

  auto expect_format_error = [&](const std::string& line) {
    std::ofstream(path) << line << "\n";
    try {
      read_jsonl(path, spec);
      ADD_FAILURE() << line;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kFormat) << line;
    }
  };
  expect_format_error(R"({"tokens": [1, 2], "label": 0})");     // wrong length
  expect_format_error(R"({"tokens": [1, 2, 9], "label": 0})");  // out of vocab
  expect_format_error(R"({"tokens": [1, 2, 3]})");              // missing label
  expect_format_error("not json");
  std::remove(path.c_str());
}

// --- training loop ------------------------------------------------------------------

ModelConfig lm_config(Precision p, double scaling) {
  ModelConfig c;
  c.dims = {16, 2, 8, 8, 32, true};
  c.kind = MeftKind::kMeft1;
  c.plan = {1, 2, 1};
  c.r = 4;
  c.scaling = {scaling, scaling, 0.1};
  c.head.kind = HeadKind::kLmTied;
  c.merge = MergeMode::gamma_lm(0.1);
  c.precision = p;
  return c;
}

Dataset lm_data() {
  TaskSpec spec;
  spec.kind = TaskKind::kSynthLm;
  spec.vocab = 8;
  spec.seq = 8;
  spec.n_train = 64;
  spec.n_dev = 16;
  return generate_synthetic_task(spec);
}

TrainConfig short_run(std::size_t steps) {
  TrainConfig t;
  t.lr = 3e-3;
  t.batch = 8;
  t.max_steps = steps;
  t.patience = 0;
  return t;
}

TEST(TrainLoop, ReducesTrainingLoss) {
  Rng rng(1);
  MeftModel m = assemble_model(lm_config(Precision::kSingle, 0.1), rng);
  MeftTarget target(m, CacheMode::kReversible);
  const TrainHistory h = train_loop(target, lm_data(), short_run(200));
  EXPECT_EQ(h.steps, 200u);
  EXPECT_EQ(h.step_losses.size(), 200u);
  RecordProperty("initial_loss", std::to_string(h.initial_loss));
  RecordProperty("final_loss", std::to_string(h.final_loss));
  EXPECT_LT(h.final_loss, h.initial_loss);
  EXPECT_GT(h.ledger[MemoryCategory::kReversibleBoundary], 0u);
}

TEST(TrainLoop, ModesAgreeAndFrozenWeightsStay) {
  std::vector<std::vector<double>> losses;
  std::vector<ParamList> finals;
  std::vector<MeftModel> models;
  models.reserve(2);
  for (CacheMode mode : {CacheMode::kVanilla, CacheMode::kReversible}) {
    Rng rng(2);
    models.push_back(assemble_model(lm_config(kD, 1.0), rng));
    MeftModel& m = models.back();
    MeftModel before = m;
    MeftTarget target(m, mode);
    losses.push_back(train_loop(target, lm_data(), short_run(20)).step_losses);
    const ParamList now = m.params(), then = before.params();
    for (std::size_t i = 0; i < now.size(); ++i) {
      if (!now[i].param->trainable) {
        EXPECT_TRUE(bit_equal(now[i].param->value, then[i].param->value)) << now[i].path;
      }
    }
  }
  ASSERT_EQ(losses[0].size(), losses[1].size());
  for (std::size_t i = 0; i < losses[0].size(); ++i) EXPECT_NEAR(losses[0][i], losses[1][i], 1e-10) << i;
  const ParamList a = models[0].trainable_params(), b = models[1].trainable_params();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LE(max_abs_diff(a[i].param->value, b[i].param->value), 1e-10) << a[i].path;
  }
}

TEST(TrainLoop, BitwiseDeterministic) {
  std::vector<TrainHistory> runs;
  for (int k = 0; k < 2; ++k) {
    Rng rng(3);
    MeftModel m = assemble_model(lm_config(Precision::kSingle, 0.1), rng);
    MeftTarget target(m, CacheMode::kReversible);
    runs.push_back(train_loop(target, lm_data(), short_run(15)));
  }
  EXPECT_EQ(runs[0].step_losses, runs[1].step_losses);
  EXPECT_EQ(runs[0].final_loss, runs[1].final_loss);
}

TEST(TrainLoop, EarlyStopsWhenDevNeverImproves) {
  Rng rng(4);
  MeftModel m = assemble_model(lm_config(Precision::kSingle, 0.1), rng);
  MeftTarget target(m, CacheMode::kReversible);
  TrainConfig cfg = short_run(0);
  cfg.lr = 0.0;  // nothing moves, so the first epoch stays best
  cfg.epochs = 50;
  cfg.patience = 3;
  const TrainHistory h = train_loop(target, lm_data(), cfg);
  EXPECT_TRUE(h.stopped_early);
  EXPECT_EQ(h.epochs.size(), 4u);
  EXPECT_EQ(h.best_epoch, 1u);
  EXPECT_EQ(h.steps, 4u * 8u);
  EXPECT_EQ(h.initial_loss, h.final_loss);
}

TEST(TrainLoop, ConfigValidation) {
  TrainConfig c;
  c.batch = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), Error);
  c.max_steps = 5;
  EXPECT_NO_THROW(c.validate());
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace revft
