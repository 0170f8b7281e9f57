// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "revft/analysis.hpp"
#include "revft/model.hpp"
#include "revft/ops.hpp"
#include "revft/train.hpp"

namespace revft {
namespace {

constexpr Precision kS = Precision::kSingle;
constexpr Precision kD = Precision::kDouble;
constexpr MeftKind kKinds[] = {MeftKind::kMeft1, MeftKind::kMeft2, MeftKind::kMeft3};

struct Outcome {
  bool passed = true;
  std::string detail;
};

/// Collects sub-checks; the criterion passes only if all of them do.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      passed_ = false;
      failures_.push_back(what);
    }
  }
  void note(const std::string& s) { notes_.push_back(s); }
  Outcome outcome() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < notes_.size(); ++i) os << (i ? "; " : "") << notes_[i];
    for (const auto& f : failures_) os << "; FAILED: " << f;
    return {passed_, os.str()};
  }

 private:
  bool passed_ = true;
  std::vector<std::string> notes_, failures_;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const char* kind_name(MeftKind k) {
  switch (k) {
    case MeftKind::kMeft1: return "meft1";
    case MeftKind::kMeft2: return "meft2";
    case MeftKind::kMeft3: return "meft3";
  }
  return "?";
}

// 1. rev_inverse o rev_forward over a random depth-8 stack at unit scaling.
Outcome invertibility() {
  Checks c;
  for (Precision p : {kS, kD}) {
    double worst = 0.0;
    for (MeftKind kind : kKinds) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        ReconConfig rc;
        rc.kind = kind;
        rc.depth = 8;
        rc.d = 64;
        rc.precision = p;
        Rng rng(seed);
        const std::vector<ReversibleLayer> stack = build_recon_stack(rc, rng);
        Rng data(1000 + seed);
        const StreamPair in{gaussian_fill({2, 8, 64}, 0.0, 1.0, data, p),
                            gaussian_fill({2, 8, 64}, 0.0, 1.0, data, p)};
        StreamPair cur = stack_forward_pair(stack, in, CacheMode::kReversible).final;
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) cur = rev_inverse(*it, cur);
        const double scale = std::max(max_abs(in.h1), max_abs(in.h2));
        worst = std::max({worst, max_abs_diff(cur.h1, in.h1) / scale, max_abs_diff(cur.h2, in.h2) / scale});
      }
    }
    const double tol = kTolerances.roundtrip(p);
    c.note(std::string(to_string(p)) + " worst rel " + sci(worst) + " (tol " + sci(tol) + ")");
    c.expect(worst <= tol, std::string(to_string(p)) + " round trip");
  }
  return c.outcome();
}

// 2. Vanilla vs reversible gradients of every adapter, depth 8, unit scaling.
Outcome gradient_equivalence() {
  Checks c;
  for (Precision p : {kS, kD}) {
    double worst = 0.0;
    for (MeftKind kind : kKinds) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        ReconConfig rc;
        rc.kind = kind;
        rc.depth = 8;
        rc.precision = p;
        rc.all_layers = true;
        worst = std::max(worst, reconstruction_error_report(rc, seed).max_abs);
      }
    }
    const double tol = kTolerances.grad_equiv(p);
    c.note(std::string(to_string(p)) + " max abs " + sci(worst) + " (tol " + sci(tol) + ")");
    c.expect(worst <= tol, std::string(to_string(p)) + " equivalence");
  }
  return c.outcome();
}

// 3. Central differences on every block and every reversible kind at d = 8.
Outcome finite_differences() {
  Checks c;
  double worst = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed : {0, 1}) {
    for (const CheckResult& r : gradcheck_blocks(seed)) {
      if (r.name.rfind("fd/", 0) != 0) continue;
      ++n;
      worst = std::max(worst, r.value);
      c.expect(r.value <= kTolerances.fd_model, r.name + " = " + sci(r.value));
    }
  }
  c.note(std::to_string(n) + " checks, worst rel " + sci(worst) + " (tol " + sci(kTolerances.fd_model) + ")");
  c.expect(n > 0, "no finite-difference checks ran");
  return c.outcome();
}

// 4. Reconstruction-error orderings, per seed and per kind.
Outcome trends() {
  Checks c;
  double min_ratio = INFINITY;
  for (MeftKind kind : kKinds) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const std::string tag = std::string(kind_name(kind)) + " seed " + std::to_string(seed);
      ReconConfig unit;
      unit.kind = kind;
      auto err = [&](ReconConfig rc) { return reconstruction_error_report(rc, seed).max_abs; };
      ReconConfig half = unit;
      half.lambda = half.beta = 0.5;
      const double e1 = err(unit), e_half = err(half);
      min_ratio = std::min(min_ratio, e_half / e1);
      c.expect(e_half >= 10.0 * e1, tag + ": scaling 0.5 vs 1 ratio " + sci(e_half / e1));

      double prev = 0.0;
      for (std::size_t depth : {2, 4, 8, 16}) {
        ReconConfig rc = unit;
        rc.depth = depth;
        const double e = err(rc);
        c.expect(e >= prev, tag + ": depth " + std::to_string(depth) + " decreased");
        prev = e;
      }
      ReconConfig wide = unit;
      wide.sigma = 0.2;
      c.expect(err(wide) > e1, tag + ": sigma 0.2 not above 0.02");
      ReconConfig shifted = unit;
      shifted.mu = 0.1;
      c.expect(err(shifted) > e1, tag + ": mu 0.1 not above 0");
    }
  }
  c.note("min scaling ratio " + sci(min_ratio) + "x over 9 (kind, seed) cells");
  return c.outcome();
}

// 5. Zero adapters + limit scalings reproduce the base, layer by layer.
Outcome starting_point() {
  Checks c;
  for (MeftKind kind : kKinds) {
    ModelConfig mc;
    mc.dims = {32, 4, 16, 16, 0, false};
    mc.kind = kind;
    mc.plan = {2, 4, 2};
    mc.precision = kS;
    mc.scaling = ScalingConfig::defaults_for(kind);
    switch (kind) {
      case MeftKind::kMeft1: mc.scaling.lambda = 0.0; break;
      case MeftKind::kMeft2: mc.scaling.beta = 0.0; break;
      case MeftKind::kMeft3: mc.scaling.lambda = mc.scaling.beta = 0.0; break;
    }
    Rng rng(0);
    const BaseModel base = make_base_model(mc.dims, mc.plan.total(), mc.base_init, mc.precision, rng);
    MeftModel m = assemble_model(mc, base, rng);
    zero_adapters(m);
    Rng tok_rng(1);
    TokenBatch t{2, 12, {}};
    for (std::size_t i = 0; i < 24; ++i) t.ids.push_back(static_cast<std::int32_t>(tok_rng.uniform_int(16)));
    const std::vector<Tensor> h = base_layer_outputs(base, t);
    const StreamTrace trace = model_stream_trace(m, t);
    std::size_t equal = 0;
    c.expect(bit_equal(trace.frozen_output, h[mc.plan.n_frozen]), std::string(kind_name(kind)) + " frozen output");
    for (std::size_t i = 0; i < trace.pairs.size(); ++i) {
      const Tensor& s = kind == MeftKind::kMeft2 ? trace.pairs[i].h1 : trace.pairs[i].h2;
      const bool eq = bit_equal(s, h[mc.plan.n_frozen + 1 + i]);
      equal += eq;
      c.expect(eq, std::string(kind_name(kind)) + " layer " + std::to_string(i));
    }
    c.note(std::string(kind_name(kind)) + " " + std::to_string(equal) + "/" + std::to_string(trace.pairs.size()) +
           " layers bitwise");
  }
  return c.outcome();
}

// 6. Persistent activation bytes against depth.
Outcome memory() {
  Checks c;
  TokenBatch t{2, 32, {}};
  for (std::size_t i = 0; i < 64; ++i) t.ids.push_back(static_cast<std::int32_t>(i % 16));
  auto capture = [&](std::size_t depth, CacheMode mode) {
    ModelConfig mc;
    mc.dims = {64, 4, 16, 32, 0, false};
    mc.plan = {0, depth, 0};
    mc.precision = kS;
    Rng rng(0);
    MeftModel m = assemble_model(mc, rng);
    return memory_ledger_capture(m, t, mode);
  };
  const std::size_t expected = 2 * (2 * 32 * 64) * sizeof(float);
  std::size_t vanilla_per_layer = 0;
  for (std::size_t depth : {4, 8, 16}) {
    const MemoryLedger rev = capture(depth, CacheMode::kReversible);
    const MemoryLedger van = capture(depth, CacheMode::kVanilla);
    const std::size_t b = rev[MemoryCategory::kReversibleBoundary];
    const std::size_t v = van[MemoryCategory::kVanillaCaches];
    c.expect(b == expected, "depth " + std::to_string(depth) + " boundary " + std::to_string(b));
    c.expect(v % depth == 0, "vanilla caches not a multiple of depth");
    if (depth == 4) vanilla_per_layer = v / depth;
    c.expect(v == vanilla_per_layer * depth, "vanilla caches not proportional at depth " + std::to_string(depth));
    c.note("depth " + std::to_string(depth) + ": boundary " + std::to_string(b) + " B, vanilla " +
           std::to_string(v) + " B");
  }
  return c.outcome();
}

// 7. Same-seed training in both cache modes.
Outcome training_equivalence() {
  Checks c;
  ModelConfig mc;
  mc.dims = {32, 4, 16, 16, 0, false};
  mc.kind = MeftKind::kMeft1;
  mc.plan = {0, 4, 0};
  mc.scaling = {1.0, 1.0, 0.1};
  mc.precision = kD;
  TaskSpec task;  // synth_classify
  const Dataset data = generate_synthetic_task(task);
  TrainConfig tc;
  tc.batch = 16;
  tc.max_steps = 200;
  tc.patience = 0;

  std::vector<MeftModel> models;
  std::vector<TrainHistory> hist;
  for (CacheMode mode : {CacheMode::kVanilla, CacheMode::kReversible}) {
    Rng rng(0);
    models.push_back(assemble_model(mc, rng));
    MeftTarget target(models.back(), mode);
    hist.push_back(train_loop(target, data, tc));
  }
  const double dloss = std::abs(hist[0].final_loss - hist[1].final_loss);
  double dparam = 0.0;
  const ParamList a = models[0].params(), b = models[1].params();
  for (std::size_t i = 0; i < a.size(); ++i) dparam = std::max(dparam, max_abs_diff(a[i].param->value, b[i].param->value));
  c.note("steps " + std::to_string(hist[1].steps) + ", loss " + sci(hist[1].initial_loss) + " -> " +
         sci(hist[1].final_loss) + ", |dloss| " + sci(dloss) + ", max |dparam| " + sci(dparam));
  c.expect(hist[0].steps == 200 && hist[1].steps == 200, "did not run 200 steps");
  c.expect(dloss <= 1e-3, "final loss gap");
  c.expect(dparam <= 1e-4, "parameter divergence");
  return c.outcome();
}

// 8. Probe initialisations on a pretrained toy backbone.
Outcome probe_direction() {
  Checks c;
  const ProbeExperiment exp;
  std::ostringstream lora, ia3;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const PlainModel base = prepare_probe_base(exp, seed);
    auto loss = [&](InitKind kind, double cv, double alpha) {
      return run_probe(exp, base, {kind, cv, alpha, 0.02, false}, seed).final_loss;
    };
    const double c0 = loss(InitKind::kLoraProbeConstant, 0.0, 1.0);
    const double c3 = loss(InitKind::kLoraProbeConstant, 0.3, 1.0);
    const double inv = loss(InitKind::kIa3Probe, 0.1, 1.0 / 0.1);
    const double one = loss(InitKind::kIa3Probe, 0.1, 1.0);
    lora << (seed ? ", " : "") << sci(c0) << " vs " << sci(c3);
    ia3 << (seed ? ", " : "") << sci(inv) << " vs " << sci(one);
    c.expect(c0 <= c3, "lora c=0 above c=0.3 at seed " + std::to_string(seed));
    c.expect(inv <= one, "ia3 alpha=1/c above alpha=1 at seed " + std::to_string(seed));
  }
  c.note("lora c=0 vs c=0.3 final loss [" + lora.str() + "]");
  c.note("ia3 c=0.1 alpha=1/c vs 1 [" + ia3.str() + "]");
  return c.outcome();
}

// 9. Segment plans: deep splits assemble, bad orders are rejected, mixed plans gradcheck.
Outcome segment_plans() {
  Checks c;
  for (SegmentPlan plan : {SegmentPlan{8, 8, 8}, SegmentPlan{0, 16, 8}}) {
    ModelConfig mc;
    mc.dims = {16, 2, 16, 8, 0, false};
    mc.plan = plan;
    mc.precision = kS;
    try {
      Rng rng(0);
      const MeftModel m = assemble_model(mc, rng);
      TokenBatch t{1, 4, {1, 2, 3, 4}};
      c.expect(model_logits(m, t).numel() == 2, plan.letters() + " logits");
    } catch (const Error& e) {
      c.expect(false, plan.letters() + ": " + e.what());
    }
  }
  // Every role sequence up to length 5 with a vanilla layer below a reversible one.
  std::size_t rejected = 0, bad = 0;
  for (std::size_t len = 2; len <= 5; ++len) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < len; ++i) combos *= 3;
    for (std::size_t code = 0; code < combos; ++code) {
      std::vector<LayerRole> roles;
      for (std::size_t i = 0, x = code; i < len; ++i, x /= 3) roles.push_back(static_cast<LayerRole>(x % 3));
      bool v_seen = false, v_below_r = false;
      for (LayerRole r : roles) {
        if (r == LayerRole::kVanilla) v_seen = true;
        if (r == LayerRole::kReversible && v_seen) v_below_r = true;
      }
      if (!v_below_r) continue;
      ++bad;
      try {
        SegmentPlan::from_roles(roles);
      } catch (const Error& e) {
        rejected += e.kind() == ErrorKind::kInvalidPlan;
      }
    }
  }
  c.expect(rejected == bad, std::to_string(bad - rejected) + " bad plans accepted");

  ModelConfig mixed;
  mixed.dims = {8, 2, 10, 4, 16, false};
  mixed.plan = {2, 2, 2};
  mixed.scaling = ScalingConfig::defaults_for(mixed.kind);
  std::size_t passed = 0;
  const auto results = gradcheck_model(mixed, 0);
  for (const CheckResult& r : results) {
    passed += r.passed;
    c.expect(r.passed, r.name + " = " + sci(r.value));
  }
  c.note("(8,8,8) and (0,16,8) assembled; " + std::to_string(rejected) + "/" + std::to_string(bad) +
         " bad orders rejected; (2,2,2) gradcheck " + std::to_string(passed) + "/" +
         std::to_string(results.size()));
  return c.outcome();
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace revft

int main() {
  using namespace revft;
  const Criterion criteria[] = {
      {1, "invertibility", 5, invertibility},
      {2, "gradient equivalence", 10, gradient_equivalence},
      {3, "finite-difference oracle", 30, finite_differences},
      {4, "reconstruction-error trends", 120, trends},
      {5, "starting point (exact limit)", 5, starting_point},
      {6, "O(1) activation memory", 10, memory},
      {7, "training equivalence", 120, training_equivalence},
      {8, "starting-point training direction", 180, probe_direction},
      {9, "segment plans", 60, segment_plans},
  };
  int failed = 0;
  for (const Criterion& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= cr.budget_seconds;
    const bool ok = o.passed && in_budget;
    failed += !ok;
    std::printf("criterion %d %s: %s (%.2f s / %.0f s budget%s) %s\n", cr.id, cr.name, ok ? "PASS" : "FAIL", secs,
                cr.budget_seconds, in_budget ? "" : ", OVER BUDGET", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
