// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>

#include "revft/ops.hpp"

namespace revft {

// --- gradient comparison ----------------------------------------------------------

namespace {

void require_matching_sets(const GradientSet& a, const GradientSet& b, std::string_view where) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kShapeMismatch, std::string(where) + ": gradient sets differ in size (" +
                                        std::to_string(a.size()) + " vs " +
                                        std::to_string(b.size()) + ")");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name) {
      fail(ErrorKind::kShapeMismatch,
           std::string(where) + ": gradient '" + a[i].name + "' paired with '" + b[i].name + "'");
    }
    require_same_shape(a[i].value, b[i].value, where);
  }
}

}  // namespace

GradReport compare_gradients(const GradientSet& a, const GradientSet& b) {
  require_matching_sets(a, b, "compare_gradients");
  GradReport rep;
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].value.to_doubles();
    const auto y = b[i].value.to_doubles();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = std::abs(x[j] - y[j]);
      rep.max_abs = std::max(rep.max_abs, diff);
      total += diff;
    }
    rep.n_params += x.size();
  }
  rep.mean_abs = rep.n_params == 0 ? 0.0 : total / static_cast<double>(rep.n_params);
  return rep;
}

double relative_error(const GradientSet& analytic, const GradientSet& numeric, double floor) {
  require_matching_sets(analytic, numeric, "relative_error");
  double diff = 0.0;
  double scale_a = 0.0;
  double scale_n = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, max_abs_diff(analytic[i].value, numeric[i].value));
    scale_a = std::max(scale_a, max_abs(analytic[i].value));
    scale_n = std::max(scale_n, max_abs(numeric[i].value));
  }
  return diff / std::max({scale_a, scale_n, floor});
}

GradientSet finite_diff_grad(const std::function<double()>& loss, const ParamList& params,
                             double epsilon) {
  if (!(epsilon > 0.0)) fail(ErrorKind::kInvalidArgument, "finite_diff_grad: epsilon must be > 0");
  GradientSet out;
  out.reserve(params.size());
  for (const auto& ref : params) {
    Tensor& v = ref.param->value;
    if (v.precision() != Precision::kDouble) {
      fail(ErrorKind::kPrecisionMismatch,
           "finite_diff_grad: parameter '" + ref.path + "' is not double precision");
    }
    Tensor g(v.shape(), Precision::kDouble);
    auto values = v.data<double>();
    auto grads = g.data<double>();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double plus = loss();
      values[i] = saved - epsilon;
      const double minus = loss();
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        fail(ErrorKind::kNonFinite, "finite_diff_grad: loss is not finite while probing '" +
                                        ref.path + "'");
      }
      grads[i] = (plus - minus) / (2.0 * epsilon);
    }
    out.push_back({ref.path, std::move(g)});
  }
  return out;
}

// --- reconstruction error ------------------------------------------------------------

std::vector<ReversibleLayer> build_recon_stack(const ReconConfig& config, Rng& rng) {
  if (config.depth == 0) fail(ErrorKind::kInvalidArgument, "reconstruction stack needs depth >= 1");
  const ScalingConfig scaling{config.lambda, config.beta, 0.1};
  std::vector<ReversibleLayer> layers;
  layers.reserve(config.depth);
  for (std::size_t i = 0; i < config.depth; ++i) {
    // Layer i consumes the same draws regardless of total depth.
    const PlmLayerParams base = make_plm_layer(config.d, config.heads, 4 * config.d, false,
                                               {config.mu, config.sigma}, config.precision, rng);
    layers.push_back(build_meft_layer(config.kind, base, config.r, config.sigma, scaling, rng,
                                      config.mu));
  }
  return layers;
}

namespace {

GradientSet stack_adapter_grads(std::vector<ReversibleLayer>& layers, bool all_layers) {
  ParamList params;
  const std::size_t n = all_layers ? layers.size() : 1;
  for (std::size_t i = 0; i < n; ++i) {
    auto add = [&](const std::string& prefix, AdapterParams& a) {
      a.visit(prefix, [&](const std::string& path, Param& p) { params.push_back({path, &p}); });
    };
    const std::string prefix = "layers." + std::to_string(i);
    add(prefix + ".f.adapter", subnet_adapter(layers[i].f));
    if (all_layers) add(prefix + ".g.adapter", subnet_adapter(layers[i].g));
  }
  return snapshot_grads(params);
}

void zero_stack_grads(std::vector<ReversibleLayer>& layers) {
  for (auto& l : layers) l.visit("", [](const std::string&, Param& p) { p.zero_grad(); });
}

struct StackProblem {
  std::vector<ReversibleLayer> layers;
  Tensor h0;
  StreamPair dfinal;
};

StackProblem make_stack_problem(const ReconConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  Rng build_rng = rng.derive(1);
  Rng data_rng = rng.derive(2);
  StackProblem p;
  p.layers = build_recon_stack(config, build_rng);
  const Shape shape{config.batch, config.seq, config.d};
  p.h0 = gaussian_fill(shape, 0.0, 1.0, data_rng, config.precision);
  // Upstream gradient of mean(merge_mean(out) * R).
  const Tensor r = gaussian_fill(shape, 0.0, 1.0, data_rng, config.precision);
  const Tensor dmerged = scale(r, 1.0 / static_cast<double>(r.numel()));
  p.dfinal = merge_backward(dmerged, MergeMode::mean(), config.kind);
  return p;
}

std::pair<GradientSet, GradientSet> vanilla_and_reversible(StackProblem& p, bool all_layers) {
  zero_stack_grads(p.layers);
  StackRun vanilla = stack_forward(p.layers, p.h0, CacheMode::kVanilla);
  stack_backward_cached(p.layers, vanilla.caches, p.dfinal);
  GradientSet gv = stack_adapter_grads(p.layers, all_layers);
  vanilla.caches.clear();

  zero_stack_grads(p.layers);
  StackRun rev = stack_forward(p.layers, p.h0, CacheMode::kReversible);
  stack_backward(p.layers, rev.final, p.dfinal);
  GradientSet gr = stack_adapter_grads(p.layers, all_layers);
  return {std::move(gv), std::move(gr)};
}

}  // namespace

GradReport reconstruction_error_report(const ReconConfig& config, std::uint64_t seed) {
  ScalingConfig{config.lambda, config.beta, 0.1}.require_invertible();
  StackProblem p = make_stack_problem(config, seed);
  auto [gv, gr] = vanilla_and_reversible(p, config.all_layers);
  return compare_gradients(gv, gr);
}

// --- sweeps ------------------------------------------------------------------------------

void SweepSpec::validate() const {
  auto need = [](bool ok, const char* axis) {
    if (!ok) fail(ErrorKind::kConfig, std::string("sweep axis '") + axis + "' must be non-empty");
  };
  need(!depths.empty(), "depth");
  need(!lambdas.empty(), "lambda");
  need(!mus.empty(), "mu");
  need(!sigmas.empty(), "sigma");
  need(!precisions.empty(), "precision");
  need(!seeds.empty(), "seed");
  for (std::size_t depth : depths) {
    if (depth == 0) fail(ErrorKind::kConfig, "sweep depths must be >= 1");
  }
  for (double s : sigmas) {
    if (!(s >= 0.0)) fail(ErrorKind::kConfig, "sweep sigmas must be >= 0");
  }
}

std::size_t SweepSpec::cells() const {
  return depths.size() * lambdas.size() * std::max<std::size_t>(betas.size(), 1) * mus.size() *
         sigmas.size() * precisions.size() * seeds.size();
}

std::vector<SweepRow> sweep_cells(const SweepSpec& spec) {
  spec.validate();
  std::vector<SweepRow> rows;
  rows.reserve(spec.cells());
  for (std::size_t depth : spec.depths) {
    for (double lambda : spec.lambdas) {
      const std::vector<double> betas = spec.betas.empty() ? std::vector<double>{lambda} : spec.betas;
      for (double beta : betas) {
        for (double mu : spec.mus) {
          for (double sigma : spec.sigmas) {
            for (Precision precision : spec.precisions) {
              for (std::uint64_t seed : spec.seeds) {
                SweepRow row;
                row.config = spec.base;
                row.config.depth = depth;
                row.config.lambda = lambda;
                row.config.beta = beta;
                row.config.mu = mu;
                row.config.sigma = sigma;
                row.config.precision = precision;
                row.seed = seed;
                rows.push_back(row);
              }
            }
          }
        }
      }
    }
  }
  return rows;
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<SweepRow> sweep_run(const SweepSpec& spec, std::size_t threads) {
  std::vector<SweepRow> rows = sweep_cells(spec);
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    SweepRow& row = rows[i];
    try {
      row.report = reconstruction_error_report(row.config, row.seed);
    } catch (const std::exception& e) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.ok = false;
      row.error = e.what();
      row.report = {nan, nan, 0};
    }
  });
  return rows;
}

// --- memory --------------------------------------------------------------------------------

MemoryLedger memory_ledger_capture(MeftModel& model, const TokenBatch& tokens, CacheMode mode) {
  zero_grads(model.params());
  ForwardResult fwd = model_forward(model, tokens, mode);
  MemoryLedger ledger = fwd.record.ledger;
  const Tensor dlogits =
      Tensor::filled(fwd.logits.shape(), fwd.logits.precision(),
                     1.0 / static_cast<double>(fwd.logits.numel()));
  TransientMeter meter;
  model_backward(model, fwd.record, dlogits, &meter);
  ledger.peak_transient_bytes = meter.peak();
  return ledger;
}

MemoryLedger walk_retained(const RunRecord& record) {
  MemoryLedger ledger;
  record.for_each_retained([&](MemoryCategory c, const Tensor& t) { ledger[c] += t.nbytes(); });
  return ledger;
}

// --- gradcheck ------------------------------------------------------------------------------

namespace {

TokenBatch random_tokens(std::size_t batch, std::size_t seq, std::size_t vocab, Rng& rng) {
  TokenBatch t{batch, seq, {}};
  t.ids.resize(batch * seq);
  for (auto& id : t.ids) id = static_cast<std::int32_t>(rng.uniform_int(vocab));
  return t;
}

/// Moves every parameter away from its structured init so each term of the
/// backward pass is exercised.
void randomize(const ParamList& params, Rng& rng, double std = 0.3) {
  for (const auto& ref : params) {
    const bool is_gamma = ref.path.ends_with("gamma");
    Tensor noise = gaussian_fill(ref.param->value.shape(), is_gamma ? 1.0 : 0.0,
                                 is_gamma ? 0.1 : std, rng, ref.param->value.precision());
    ref.param->value = std::move(noise);
    ref.param->set_trainable(true);
    ref.param->zero_grad();
  }
}

ParamList concat(std::initializer_list<ParamList> parts) {
  ParamList out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

/// Parameter-like holder for an input tensor so it can be probed too.
struct InputParam {
  Param p;
  ParamList list(const std::string& name) { return {{name, &p}}; }
};

CheckResult fd_check(const std::string& name, const ParamList& params,
                     const std::function<double()>& loss, const std::function<void()>& analytic,
                     double tolerance) {
  zero_grads(params);
  analytic();
  const GradientSet a = snapshot_grads(params);
  const GradientSet n = finite_diff_grad(loss, params, kTolerances.fd_epsilon);
  const double err = relative_error(a, n);
  return {name, err, tolerance, err <= tolerance};
}

constexpr Precision kF64 = Precision::kDouble;

}  // namespace

std::vector<CheckResult> gradcheck_blocks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);
  const std::size_t d = 8, heads = 2, ffn = 16, r = 3, batch = 2, seq = 3;
  const Shape xs{batch, seq, d};
  const double block_tol = kTolerances.fd_block;

  auto make_input = [&] {
    InputParam x{Param(gaussian_fill(xs, 0.0, 1.0, rng, kF64), true)};
    return x;
  };

  {  // adapter
    AdapterParams a = make_adapter(d, r, {}, kF64, rng);
    InputParam x = make_input();
    randomize(collect_params(a), rng);
    const Tensor w = gaussian_fill(xs, 0.0, 1.0, rng, kF64);
    const ParamList ps = concat({collect_params(a), x.list("x")});
    out.push_back(fd_check(
        "fd/adapter", ps, [&] { return dot(adapter_apply(x.p.value, a, nullptr), w); },
        [&] {
          BlockCache c;
          adapter_apply(x.p.value, a, &c);
          x.p.accumulate(adapter_backward(a, c, w));
        },
        block_tol));
  }

  for (bool causal : {false, true}) {  // attention block + adapter
    AttentionParams at = make_attention(d, heads, causal, {}, kF64, rng);
    AdapterParams a = make_adapter(d, r, {}, kF64, rng);
    randomize(collect_params(at), rng);
    randomize(collect_params(a), rng);
    InputParam x = make_input();
    const Tensor w = gaussian_fill(xs, 0.0, 1.0, rng, kF64);
    const ParamList ps = concat({collect_params(at), collect_params(a), x.list("x")});
    out.push_back(fd_check(
        causal ? "fd/attention_block_causal" : "fd/attention_block", ps,
        [&] { return dot(attention_block_apply(x.p.value, at, &a, nullptr), w); },
        [&] {
          BlockCache c;
          attention_block_apply(x.p.value, at, &a, &c);
          x.p.accumulate(attention_block_backward(at, &a, c, w));
        },
        block_tol));
  }

  struct MlpVariant {
    const char* name;
    std::optional<InitScheme> scheme;
  };
  const InitScheme lora{InitKind::kLoraProbeGaussian, 0.1, 2.0, 0.02, true};
  const InitScheme ia3{InitKind::kIa3Probe, 0.5, 1.5, 0.02, true};
  for (const MlpVariant& v : {MlpVariant{"fd/mlp_block", std::nullopt},
                              MlpVariant{"fd/mlp_block_lora", lora},
                              MlpVariant{"fd/mlp_block_ia3", ia3}}) {
    MlpParams m = make_mlp(d, ffn, {}, kF64, rng);
    if (v.scheme) {
      m.mod1 = make_init_scheme(*v.scheme, d, ffn, r, kF64, rng);
      m.mod2 = make_init_scheme(*v.scheme, ffn, d, r, kF64, rng);
    }
    AdapterParams a = make_adapter(d, r, {}, kF64, rng);
    randomize(collect_params(m), rng);
    randomize(collect_params(a), rng);
    InputParam x = make_input();
    const Tensor w = gaussian_fill(xs, 0.0, 1.0, rng, kF64);
    const ParamList ps = concat({collect_params(m), collect_params(a), x.list("x")});
    out.push_back(fd_check(
        v.name, ps, [&] { return dot(mlp_block_apply(x.p.value, m, &a, nullptr), w); },
        [&] {
          BlockCache c;
          mlp_block_apply(x.p.value, m, &a, &c);
          x.p.accumulate(mlp_block_backward(m, &a, c, w));
        },
        block_tol));
  }

  {  // full PLM layer with adapter
    PlmLayerParams layer = make_plm_layer(d, heads, ffn, false, {}, kF64, rng);
    AdapterParams a = make_adapter(d, r, {}, kF64, rng);
    randomize(collect_params(layer), rng);
    randomize(collect_params(a), rng);
    InputParam x = make_input();
    const Tensor w = gaussian_fill(xs, 0.0, 1.0, rng, kF64);
    const ParamList ps = concat({collect_params(layer), collect_params(a), x.list("x")});
    out.push_back(fd_check(
        "fd/plm_layer", ps, [&] { return dot(plm_layer_apply(x.p.value, layer, &a, nullptr), w); },
        [&] {
          BlockCache c;
          plm_layer_apply(x.p.value, layer, &a, &c);
          x.p.accumulate(plm_layer_backward(layer, &a, c, w));
        },
        block_tol));
  }

  const std::size_t vocab = 5, max_len = 4;
  {  // embedding; repeated ids exercise row accumulation
    EmbeddingParams e = make_embedding(vocab, max_len, d, {0.0, 1.0}, kF64, rng);
    randomize(collect_params(e), rng, 1.0);
    TokenBatch tokens{batch, seq, {1, 3, 1, 4, 1, 0}};
    const Tensor w = gaussian_fill(xs, 0.0, 1.0, rng, kF64);
    out.push_back(fd_check(
        "fd/embedding", collect_params(e), [&] { return dot(embed_apply(tokens, e, nullptr), w); },
        [&] {
          BlockCache c;
          embed_apply(tokens, e, &c);
          embed_backward(e, tokens, c, w);
        },
        block_tol));
  }

  {  // classify head
    HeadParams head = make_classify_head(d, 3, {}, kF64, rng);
    auto& cls = std::get<ClassifyHead>(head);
    randomize(collect_params(cls), rng);
    InputParam x = make_input();
    const Tensor w = gaussian_fill({batch, 3}, 0.0, 1.0, rng, kF64);
    const ParamList ps = concat({collect_params(cls), x.list("h")});
    out.push_back(fd_check(
        "fd/classify_head", ps, [&] { return dot(head_apply(x.p.value, head, nullptr, nullptr), w); },
        [&] {
          BlockCache c;
          head_apply(x.p.value, head, nullptr, &c);
          x.p.accumulate(head_backward(head, nullptr, c, w));
        },
        block_tol));
  }

  {  // tied LM head on top of the embedding: both contributions reach tok
    EmbeddingParams e = make_embedding(vocab, max_len, d, {0.0, 1.0}, kF64, rng);
    randomize(collect_params(e), rng, 1.0);
    HeadParams head = LmTiedHead{};
    TokenBatch tokens{batch, seq, {0, 2, 2, 4, 3, 2}};
    const Tensor w = gaussian_fill({batch, seq, vocab}, 0.0, 1.0, rng, kF64);
    out.push_back(fd_check(
        "fd/lm_tied_head", collect_params(e),
        [&] { return dot(head_apply(embed_apply(tokens, e, nullptr), head, &e, nullptr), w); },
        [&] {
          BlockCache ce, ch;
          const Tensor h = embed_apply(tokens, e, &ce);
          head_apply(h, head, &e, &ch);
          embed_backward(e, tokens, ce, head_backward(head, &e, ch, w));
        },
        block_tol));
  }

  // One coupling layer of each kind, differentiated through rev_backward.
  for (MeftKind kind : {MeftKind::kMeft1, MeftKind::kMeft2, MeftKind::kMeft3}) {
    PlmLayerParams base = make_plm_layer(d, heads, ffn, false, {}, kF64, rng);
    ReversibleLayer layer =
        build_meft_layer(kind, base, r, 0.02, ScalingConfig::defaults_for(kind), rng);
    randomize(collect_params(layer), rng);
    InputParam x1 = make_input();
    InputParam x2 = make_input();
    const Tensor w1 = gaussian_fill(xs, 0.0, 1.0, rng, kF64);
    const Tensor w2 = gaussian_fill(xs, 0.0, 1.0, rng, kF64);
    const ParamList ps = concat({collect_params(layer), x1.list("h1"), x2.list("h2")});
    out.push_back(fd_check(
        "fd/rev_layer_" + to_string(kind), ps,
        [&] {
          const StreamPair y = rev_forward(layer, {x1.p.value, x2.p.value}, CacheMode::kReversible);
          return dot(y.h1, w1) + dot(y.h2, w2);
        },
        [&] {
          const StreamPair y = rev_forward(layer, {x1.p.value, x2.p.value}, CacheMode::kReversible);
          const RevBackward b = rev_backward(layer, y, {w1, w2});
          x1.p.accumulate(b.din.h1);
          x2.p.accumulate(b.din.h2);
        },
        kTolerances.fd_model));
  }
  return out;
}

std::vector<CheckResult> gradcheck_model(const ModelConfig& config, std::uint64_t seed,
                                         std::size_t batch, std::size_t seq) {
  std::vector<CheckResult> out;
  const std::string plan = config.plan.letters();
  seq = std::min(seq, config.dims.max_len);

  {  // finite differences on every trainable parameter, double precision
    ModelConfig dcfg = config;
    dcfg.precision = Precision::kDouble;
    Rng rng(seed);
    Rng model_rng = rng.derive(1);
    Rng data_rng = rng.derive(2);
    MeftModel model = assemble_model(dcfg, model_rng);
    // Move adapters off their near-zero init so every path carries signal.
    ParamList trainable = model.trainable_params();
    for (const auto& ref : trainable) {
      ref.param->value = gaussian_fill(ref.param->value.shape(), 0.0, 0.3, data_rng, kF64);
    }
    const TokenBatch tokens = random_tokens(batch, seq, dcfg.dims.vocab, data_rng);
    const Tensor probe = model_logits(model, tokens);
    const Tensor w = gaussian_fill(probe.shape(), 0.0, 1.0, data_rng, kF64);
    const CacheMode mode =
        std::abs(dcfg.scaling.lambda) >= kMinScaling && std::abs(dcfg.scaling.beta) >= kMinScaling
            ? CacheMode::kReversible
            : CacheMode::kVanilla;
    out.push_back(fd_check(
        "fd/model_" + to_string(config.kind) + "_" + plan, trainable,
        [&] { return dot(model_logits(model, tokens), w); },
        [&] {
          ForwardResult f = model_forward(model, tokens, mode);
          model_backward(model, f.record, w);
        },
        kTolerances.fd_model));
  }

  {  // reversible vs all-vanilla gradients in the configured precision
    config.scaling.require_invertible();
    Rng rng(seed);
    Rng model_rng = rng.derive(1);
    Rng data_rng = rng.derive(2);
    MeftModel model = assemble_model(config, model_rng);
    const TokenBatch tokens = random_tokens(batch, seq, config.dims.vocab, data_rng);
    const Tensor probe = model_logits(model, tokens);
    const Tensor w = scale(gaussian_fill(probe.shape(), 0.0, 1.0, data_rng, config.precision),
                           1.0 / static_cast<double>(probe.numel()));
    auto grads = [&](CacheMode mode) {
      zero_grads(model.params());
      ForwardResult f = model_forward(model, tokens, mode);
      return model_backward(model, f.record, w);
    };
    const GradReport rep = compare_gradients(grads(CacheMode::kVanilla), grads(CacheMode::kReversible));
    const double tol = kTolerances.grad_equiv(config.precision);
    out.push_back({"equiv/model_" + to_string(config.kind) + "_" + plan + "_" +
                       std::string(to_string(config.precision)),
                   rep.max_abs, tol, rep.max_abs <= tol});
  }
  return out;
}

std::vector<CheckResult> gradcheck_equivalence(std::size_t depth, std::size_t d,
                                               Precision precision, std::uint64_t seed) {
  std::vector<CheckResult> out;
  for (MeftKind kind : {MeftKind::kMeft1, MeftKind::kMeft2, MeftKind::kMeft3}) {
    ReconConfig cfg;
    cfg.kind = kind;
    cfg.depth = depth;
    cfg.d = d;
    cfg.heads = d % 4 == 0 ? 4 : 1;
    cfg.r = std::max<std::size_t>(1, d / 8);
    cfg.precision = precision;
    cfg.all_layers = true;
    StackProblem p = make_stack_problem(cfg, seed);
    auto [gv, gr] = vanilla_and_reversible(p, true);
    const GradReport rep = compare_gradients(gv, gr);
    const double tol = kTolerances.grad_equiv(precision);
    out.push_back({"equiv/stack_" + to_string(kind) + "_depth" + std::to_string(depth) + "_" +
                       std::string(to_string(precision)),
                   rep.max_abs, tol, rep.max_abs <= tol});
  }
  return out;
}

}  // namespace revft
