// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "revft/ops.hpp"

namespace revft {

// --- optimizer ---------------------------------------------------------------------

void adam_step(AdamState& state, const ParamList& params, const GradientSet& grads, double lr) {
  if (grads.size() != params.size()) {
    fail(ErrorKind::kShapeMismatch, "adam_step: " + std::to_string(grads.size()) +
                                        " gradients for " + std::to_string(params.size()) +
                                        " parameters");
  }
  if (state.m.empty()) {
    for (const auto& ref : params) {
      state.m.emplace_back(ref.param->value.shape(), Precision::kDouble);
      state.v.emplace_back(ref.param->value.shape(), Precision::kDouble);
    }
  } else if (state.m.size() != params.size()) {
    fail(ErrorKind::kShapeMismatch, "adam_step: optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].name != params[i].path) {
      fail(ErrorKind::kShapeMismatch,
           "adam_step: gradient '" + grads[i].name + "' paired with '" + params[i].path + "'");
    }
    require_same_shape(params[i].param->value, grads[i].value, "adam_step");
    if (params[i].param->value.shape() != state.m[i].shape()) {  // moments are always double
      fail(ErrorKind::kShapeMismatch, "adam_step: optimizer state does not match '" + params[i].path + "'");
    }
    check_finite(grads[i].value, "adam_step gradient");
  }

  const AdamConfig& c = state.config;
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i].param;
    if (!p.trainable) continue;
    const std::vector<double> g = grads[i].value.to_doubles();
    auto m = state.m[i].data<double>();
    auto v = state.v[i].data<double>();
    dispatch(p.value.precision(), [&]<class T>(T) {
      auto w = p.value.data<T>();
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
        v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        double x = static_cast<double>(w[j]);
        x -= lr * c.weight_decay * x;
        x -= lr * mhat / (std::sqrt(vhat) + c.eps);
        w[j] = static_cast<T>(x);
      }
    });
  }
}

double global_norm(const GradientSet& grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += dot(g.value, g.value);
  return std::sqrt(sq);
}

double clip_grad_norm(GradientSet& grads, double max_norm) {
  if (!(max_norm > 0.0)) fail(ErrorKind::kInvalidArgument, "clip_grad_norm: max_norm must be > 0");
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) fail(ErrorKind::kNonFinite, "clip_grad_norm: gradient norm is not finite");
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g.value = scale(g.value, s);
  }
  return norm;
}

double lr_schedule(std::size_t step, std::size_t total, double warmup_ratio, double peak) {
  if (total == 0) fail(ErrorKind::kInvalidArgument, "lr_schedule: total_steps must be > 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "lr_schedule: warmup_ratio must be in [0, 1)");
  }
  if (step >= total) return 0.0;
  const auto warmup = static_cast<std::size_t>(std::llround(warmup_ratio * static_cast<double>(total)));
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

// --- losses -------------------------------------------------------------------------

namespace {

std::size_t rows_for(const Tensor& logits, std::span<const std::int32_t> targets) {
  const std::size_t k = logits.last_dim();
  const std::size_t rows = logits.numel() / k;
  if (rows != targets.size()) {
    fail(ErrorKind::kShapeMismatch, "loss: " + std::to_string(targets.size()) + " targets for " +
                                        std::to_string(rows) + " logit rows");
  }
  for (std::int32_t t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      fail(ErrorKind::kOutOfRange, "loss: target " + std::to_string(t) + " outside [0, " +
                                       std::to_string(k) + ")");
    }
  }
  return rows;
}

}  // namespace

LossResult cross_entropy_loss(const Tensor& logits, std::span<const std::int32_t> targets) {
  const std::size_t rows = rows_for(logits, targets);
  const std::size_t k = logits.last_dim();
  const std::vector<double> z = logits.to_doubles();
  std::vector<double> dz(z.size());
  double total = 0.0;
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = z.data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - row[targets[r]];
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - lse);
      dz[r * k + j] = (p - (static_cast<std::int32_t>(j) == targets[r] ? 1.0 : 0.0)) * inv_rows;
    }
  }
  return {total * inv_rows, Tensor::from_values(logits.shape(), dz, logits.precision())};
}

double accuracy(const Tensor& logits, std::span<const std::int32_t> targets) {
  const std::size_t rows = rows_for(logits, targets);
  const std::size_t k = logits.last_dim();
  const std::vector<double> z = logits.to_doubles();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = z.data() + r * k;
    if (std::max_element(row, row + k) - row == targets[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows);
}

// --- targets --------------------------------------------------------------------------

double MeftTarget::train_step_loss(const Batch& batch) {
  zero_grads(model_.trainable_params());
  ForwardResult fwd = model_forward(model_, batch.tokens, mode_);
  LossResult loss = cross_entropy_loss(fwd.logits, batch.targets);
  TransientMeter meter;
  model_backward(model_, fwd.record, loss.dlogits, &meter);
  ledger_ = fwd.record.ledger;
  ledger_.peak_transient_bytes = meter.peak();
  return loss.loss;
}

double PlainTarget::train_step_loss(const Batch& batch) {
  zero_grads(model_.trainable_params());
  PlainRecord record;
  const Tensor logits = plain_forward(model_, batch.tokens, &record);
  LossResult loss = cross_entropy_loss(logits, batch.targets);
  plain_backward(model_, record, loss.dlogits);
  return loss.loss;
}

// --- loop ---------------------------------------------------------------------------------

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, m); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) bad("train.lr must be finite and >= 0");
  if (batch == 0) bad("train.batch must be >= 1");
  if (epochs == 0 && max_steps == 0) bad("train.epochs or train.max_steps must be >= 1");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) bad("train.warmup_ratio must be in [0, 1)");
  if (!(adam.max_grad_norm > 0.0)) bad("train.max_grad_norm must be > 0");
  if (!(adam.weight_decay >= 0.0)) bad("train.weight_decay must be >= 0");
}

std::pair<double, double> evaluate(TrainTarget& target, std::span<const Example> examples,
                                   bool lm, std::size_t batch) {
  if (examples.empty()) return {0.0, 0.0};
  double loss = 0.0;
  double acc = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < examples.size(); start += batch) {
    const std::size_t end = std::min(examples.size(), start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(examples, idx, lm);
    const Tensor logits = target.logits(b.tokens);
    // Weight by rows so uneven final batches average correctly.
    const double w = static_cast<double>(idx.size());
    loss += cross_entropy_loss(logits, b.targets).loss * w;
    acc += accuracy(logits, b.targets) * w;
  }
  const double n = static_cast<double>(examples.size());
  return {loss / n, acc / n};
}

TrainHistory train_loop(TrainTarget& target, const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (data.train.empty()) fail(ErrorKind::kConfig, "training set is empty");
  const bool lm = data.spec.is_lm();
  const std::size_t n = data.train.size();
  const std::size_t per_epoch = (n + config.batch - 1) / config.batch;
  const std::size_t total = config.max_steps > 0 ? config.max_steps : config.epochs * per_epoch;

  TrainHistory hist;
  hist.best_dev_metric = -std::numeric_limits<double>::infinity();
  hist.initial_loss = evaluate(target, data.train, lm, config.batch).first;

  const ParamList trainable = target.trainable_params();
  AdamState adam{config.adam, {}, {}, 0};
  Rng shuffle_rng = Rng(config.seed).derive(7);
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; step < total; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < n && step < total; start += config.batch) {
      const std::size_t end = std::min(n, start + config.batch);
      const Batch batch =
          make_batch(data.train, std::span<const std::size_t>(order).subspan(start, end - start), lm);
      const double loss = target.train_step_loss(batch);
      GradientSet grads = snapshot_grads(trainable);
      clip_grad_norm(grads, config.adam.max_grad_norm);
      adam_step(adam, trainable, grads, lr_schedule(step, total, config.warmup_ratio, config.lr));
      hist.step_losses.push_back(loss);
      epoch_loss += loss;
      ++epoch_steps;
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = step;
    rec.train_loss = epoch_loss / static_cast<double>(epoch_steps);
    std::tie(rec.dev_loss, rec.dev_metric) = evaluate(target, data.dev, lm, config.batch);
    hist.epochs.push_back(rec);
    if (rec.dev_metric > hist.best_dev_metric) {
      hist.best_dev_metric = rec.dev_metric;
      hist.best_epoch = epoch;
      stale = 0;
    } else if (config.patience > 0 && ++stale >= config.patience) {
      hist.stopped_early = step < total;
      break;
    }
  }
  hist.steps = step;
  hist.final_loss = evaluate(target, data.train, lm, config.batch).first;
  hist.ledger = target.last_ledger();
  return hist;
}

// --- starting-point probes ---------------------------------------------------------------

PlainModel prepare_probe_base(const ProbeExperiment& exp, std::uint64_t seed) {
  Rng rng(seed);
  Rng model_rng = rng.derive(11);
  const HeadMode head{HeadKind::kClassify, 2};
  PlainModel model = make_plain_model(exp.dims, exp.layers, head, {0.0, 0.02}, exp.precision, model_rng);
  if (exp.pretrained) {
    TaskSpec pretext = exp.task;
    pretext.seed = exp.task.seed + exp.pretext_seed_offset;
    const Dataset data = generate_synthetic_task(pretext);
    set_all_trainable(model, true);
    PlainTarget target(model);
    TrainConfig cfg = exp.pretrain;
    cfg.seed = seed;
    train_loop(target, data, cfg);
  }
  set_all_trainable(model, false);
  return model;
}

ProbeResult run_probe(const ProbeExperiment& exp, const PlainModel& base, const InitScheme& scheme,
                      std::uint64_t seed) {
  PlainModel model = base;
  Rng rng(seed);
  Rng probe_rng = rng.derive(21);
  Rng head_rng = rng.derive(22);
  const Dataset data = generate_synthetic_task(exp.task);
  // Fresh task head; the pretext head is discarded.
  model.head = make_classify_head(exp.dims.d, data.classes, {0.0, 0.02}, exp.precision, head_rng);
  attach_mlp_probes(model, scheme, exp.r, probe_rng);
  PlainTarget target(model);
  TrainConfig cfg = exp.finetune;
  cfg.seed = seed;
  const TrainHistory h = train_loop(target, data, cfg);
  return {h.initial_loss, h.final_loss, h.best_dev_metric};
}

}  // namespace revft
