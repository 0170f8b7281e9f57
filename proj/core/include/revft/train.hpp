// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimizer, losses, schedules, synthetic tasks and the training loop.
#ifndef REVFT_TRAIN_HPP_
#define REVFT_TRAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "revft/memory_ledger.hpp"
#include "revft/model.hpp"

namespace revft {

// --- optimizer ------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;  // decoupled
  double max_grad_norm = 1.0;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;  // one per parameter, in list order
  std::vector<Tensor> v;
  std::size_t t = 0;
};

/// One bias-corrected AdamW update of every trainable parameter in `params`
/// using the gradient of the same name in `grads`. Frozen parameters are
/// left untouched.
void adam_step(AdamState& state, const ParamList& params, const GradientSet& grads, double lr);

/// Scales `grads` in place so the global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
double clip_grad_norm(GradientSet& grads, double max_norm);

double global_norm(const GradientSet& grads);

/// Linear warmup over round(warmup_ratio * total) steps, then linear decay
/// to zero at `total`. Steps past `total` give 0.
double lr_schedule(std::size_t step, std::size_t total, double warmup_ratio, double peak);

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;
};

/// Mean negative log-likelihood over every row of `logits` (last axis =
/// classes); one target per row.
LossResult cross_entropy_loss(const Tensor& logits, std::span<const std::int32_t> targets);

/// Fraction of rows whose argmax equals the target.
double accuracy(const Tensor& logits, std::span<const std::int32_t> targets);

// --- data -------------------------------------------------------------------------

enum class TaskKind { kSynthClassify, kSynthLm, kJsonl };
std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::kSynthClassify;
  std::size_t vocab = 16;
  std::size_t seq = 8;
  std::size_t n_train = 256;
  std::size_t n_dev = 64;
  std::string path;     // jsonl only
  bool lm = false;      // jsonl only: next-token examples without labels
  std::uint64_t seed = 0;

  bool is_lm() const { return kind == TaskKind::kSynthLm || (kind == TaskKind::kJsonl && lm); }
  void validate() const;
};

/// Classification: `tokens` has `seq` ids. LM: `tokens` has seq + 1 ids; the
/// model reads the first seq and predicts the last seq.
struct Example {
  std::vector<std::int32_t> tokens;
  std::int32_t label = 0;
};

struct Dataset {
  TaskSpec spec;
  std::size_t classes = 2;  // classification only
  std::vector<Example> train;
  std::vector<Example> dev;
};

Dataset generate_synthetic_task(const TaskSpec& spec);

/// One example per line: {"tokens": [...], "label": k} or {"tokens": [...]}.
std::vector<Example> read_jsonl(const std::string& path, const TaskSpec& spec);
void write_jsonl(const std::string& path, std::span<const Example> examples, bool with_labels);

struct Batch {
  TokenBatch tokens;
  std::vector<std::int32_t> targets;
};

Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices,
                 bool lm);

// --- training ---------------------------------------------------------------------

/// What the loop needs from a model.
class TrainTarget {
 public:
  virtual ~TrainTarget() = default;
  virtual ParamList params() = 0;
  virtual ParamList trainable_params() = 0;
  /// Forward + backward; gradients land in the parameters' accumulators.
  virtual double train_step_loss(const Batch& batch) = 0;
  virtual Tensor logits(const TokenBatch& tokens) = 0;
  virtual MemoryLedger last_ledger() const { return {}; }
};

class MeftTarget final : public TrainTarget {
 public:
  MeftTarget(MeftModel& model, CacheMode mode) : model_(model), mode_(mode) {}
  ParamList params() override { return model_.params(); }
  ParamList trainable_params() override { return model_.trainable_params(); }
  double train_step_loss(const Batch& batch) override;
  Tensor logits(const TokenBatch& tokens) override { return model_logits(model_, tokens); }
  MemoryLedger last_ledger() const override { return ledger_; }

 private:
  MeftModel& model_;
  CacheMode mode_;
  MemoryLedger ledger_;
};

class PlainTarget final : public TrainTarget {
 public:
  explicit PlainTarget(PlainModel& model) : model_(model) {}
  ParamList params() override { return model_.params(); }
  ParamList trainable_params() override { return model_.trainable_params(); }
  double train_step_loss(const Batch& batch) override;
  Tensor logits(const TokenBatch& tokens) override { return plain_forward(model_, tokens, nullptr); }

 private:
  PlainModel& model_;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 16;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0: epochs * batches per epoch
  double warmup_ratio = 0.06;
  std::uint64_t seed = 0;
  std::size_t patience = 5;  // 0 disables early stopping
  AdamConfig adam;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;  // cumulative
  double train_loss = 0.0;  // mean minibatch loss over the epoch
  double dev_loss = 0.0;
  double dev_metric = 0.0;  // accuracy (token accuracy for LM)
};

struct TrainHistory {
  double initial_loss = 0.0;  // full training-set loss before the first step
  double final_loss = 0.0;    // ... and after the last
  std::vector<double> step_losses;
  std::vector<EpochRecord> epochs;
  double best_dev_metric = 0.0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  bool stopped_early = false;
  MemoryLedger ledger;
};

/// Mean loss and accuracy over `examples`, forward only.
std::pair<double, double> evaluate(TrainTarget& target, std::span<const Example> examples,
                                   bool lm, std::size_t batch);

TrainHistory train_loop(TrainTarget& target, const Dataset& data, const TrainConfig& config);

// --- starting-point probes ------------------------------------------------------------

/// A plain transformer, optionally pretrained (all weights) on the task's
/// generator with data seed task.seed + pretext_seed_offset, then frozen and
/// fine-tuned through LoRA / (IA)^3 probes on both MLP projections plus a
/// fresh head. The default offset 0 pretrains on the fine-tuning data itself:
/// parity labels on fresh data are not learnable at this scale, so only a
/// backbone that has fit the training set carries a starting point worth
/// preserving.
struct ProbeExperiment {
  ModelDims dims{32, 4, 16, 16, 0, false};
  std::size_t layers = 2;
  Precision precision = Precision::kDouble;
  TaskSpec task{TaskKind::kSynthClassify, 16, 6, 128, 64, "", false, 0};
  bool pretrained = true;  // false: random-backbone baseline
  std::uint64_t pretext_seed_offset = 0;
  TrainConfig pretrain{3e-3, 16, 60, 0, 0.06, 0, 0, {}};
  TrainConfig finetune{1e-3, 16, 0, 200, 0.06, 0, 0, {}};
  std::size_t r = 4;
};

PlainModel prepare_probe_base(const ProbeExperiment& exp, std::uint64_t seed);

struct ProbeResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double best_dev_metric = 0.0;
};

ProbeResult run_probe(const ProbeExperiment& exp, const PlainModel& base, const InitScheme& scheme,
                      std::uint64_t seed);

}  // namespace revft

#endif  // REVFT_TRAIN_HPP_
