// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Oracles and measurements: finite-difference gradients, vanilla-vs-reversible
// gradient comparison, parameter sweeps and activation-memory capture.
#ifndef REVFT_ANALYSIS_HPP_
#define REVFT_ANALYSIS_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "revft/memory_ledger.hpp"
#include "revft/model.hpp"

namespace revft {

/// Every numeric contract in one place.
struct Tolerances {
  double roundtrip_single = 1e-4;  // relative, rev_inverse o rev_forward
  double roundtrip_double = 1e-10;
  double grad_equiv_single = 1e-6;  // absolute, vanilla vs reversible
  double grad_equiv_double = 1e-12;
  double fd_epsilon = 1e-5;
  double fd_block = 1e-6;  // relative, single blocks
  double fd_model = 1e-5;  // relative, reversible layers and models

  double roundtrip(Precision p) const {
    return p == Precision::kSingle ? roundtrip_single : roundtrip_double;
  }
  double grad_equiv(Precision p) const {
    return p == Precision::kSingle ? grad_equiv_single : grad_equiv_double;
  }
};

inline constexpr Tolerances kTolerances{};

struct GradReport {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  std::size_t n_params = 0;  // scalar elements compared
};

/// Element-wise comparison of two gradient sets with matching names/shapes.
GradReport compare_gradients(const GradientSet& a, const GradientSet& b);

/// max|a - n| / max(|a|_inf, |n|_inf, floor) over all tensors.
double relative_error(const GradientSet& analytic, const GradientSet& numeric,
                      double floor = 1e-6);

/// Central differences (L(p + eps) - L(p - eps)) / (2 eps) for every element
/// of every listed parameter. Parameters must be double precision; each is
/// restored bitwise after probing.
GradientSet finite_diff_grad(const std::function<double()>& loss, const ParamList& params,
                             double epsilon = kTolerances.fd_epsilon);

// --- reconstruction error -----------------------------------------------------

/// One cell of the vanilla-vs-reversible gradient study. All linear weights
/// (base and adapters) are drawn from N(mu, sigma^2); the stack input is
/// standard normal and the upstream gradient is that of mean(merge(out) * R)
/// for a standard-normal R.
struct ReconConfig {
  MeftKind kind = MeftKind::kMeft1;
  std::size_t depth = 8;
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t seq = 8;
  std::size_t batch = 2;
  std::size_t r = 8;
  double lambda = 1.0;
  double beta = 1.0;
  double mu = 0.0;
  double sigma = 0.02;
  Precision precision = Precision::kSingle;
  /// Compare every adapter instead of only the first layer's F adapter.
  bool all_layers = false;
};

inline constexpr const char* kReconInputDistribution = "standard_normal";

GradReport reconstruction_error_report(const ReconConfig& config, std::uint64_t seed);

/// Builds the stack used by reconstruction_error_report.
std::vector<ReversibleLayer> build_recon_stack(const ReconConfig& config, Rng& rng);

// --- sweeps --------------------------------------------------------------------------

/// Cross product, enumerated with depth outermost, then lambda, beta, mu,
/// sigma, precision, and seed innermost. An empty `betas` ties beta to lambda.
struct SweepSpec {
  ReconConfig base;
  std::vector<std::size_t> depths{8};
  std::vector<double> lambdas{1.0};
  std::vector<double> betas;
  std::vector<double> mus{0.0};
  std::vector<double> sigmas{0.02};
  std::vector<Precision> precisions{Precision::kSingle};
  std::vector<std::uint64_t> seeds{0, 1, 2};

  void validate() const;
  std::size_t cells() const;
};

struct SweepRow {
  ReconConfig config;
  std::uint64_t seed = 0;
  GradReport report;
  bool ok = true;
  std::string error;  // set when !ok; report fields are NaN
};

std::vector<SweepRow> sweep_cells(const SweepSpec& spec);

/// Runs every cell (up to `threads` at once); rows come back in cell order.
std::vector<SweepRow> sweep_run(const SweepSpec& spec, std::size_t threads = 1);

/// Applies fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// --- memory ---------------------------------------------------------------------------

/// Forward in `mode`, then backward with a transient meter.
MemoryLedger memory_ledger_capture(MeftModel& model, const TokenBatch& tokens, CacheMode mode);

/// Persistent bytes recomputed by walking every retained tensor of a record.
MemoryLedger walk_retained(const RunRecord& record);

// --- gradcheck --------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Finite-difference checks of every block type and of a reversible layer of
/// each MEFT kind, on small random double-precision instances.
std::vector<CheckResult> gradcheck_blocks(std::uint64_t seed);

/// Finite differences on the trainable parameters of `config`'s model
/// (forced to double precision), plus vanilla-vs-reversible agreement of
/// all adapter gradients in the configured precision.
std::vector<CheckResult> gradcheck_model(const ModelConfig& config, std::uint64_t seed,
                                         std::size_t batch = 2, std::size_t seq = 4);

/// Vanilla-vs-reversible agreement for a depth-`depth` stack of each MEFT kind.
std::vector<CheckResult> gradcheck_equivalence(std::size_t depth, std::size_t d,
                                               Precision precision, std::uint64_t seed);

}  // namespace revft

#endif  // REVFT_ANALYSIS_HPP_
