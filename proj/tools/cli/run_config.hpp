// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Declarative run description for the revft tool. See README.md for the
// JSON schema; unknown keys anywhere are rejected.
#ifndef REVFT_TOOLS_RUN_CONFIG_HPP_
#define REVFT_TOOLS_RUN_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "revft/analysis.hpp"
#include "revft/train.hpp"

namespace revft::cli {

struct GradcheckOptions {
  bool blocks = true;
  std::size_t batch = 2;
  std::size_t seq = 4;
  std::size_t equiv_depth = 8;  // 0 skips the stack-equivalence suite
  std::size_t equiv_d = 16;
};

/// One alpha axis value: a number, or the string "1/c".
struct AlphaSpec {
  bool inverse_c = false;
  double value = 1.0;
};

struct InitSweepOptions {
  std::vector<std::string> schemes{"lora_probe", "ia3_probe"};
  std::vector<double> cs{0.0, 0.1, 0.3};
  std::vector<AlphaSpec> alphas{AlphaSpec{false, 1.0}};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  ProbeExperiment experiment;
};

struct MemoryOptions {
  std::size_t batch = 2;
  std::size_t seq = 8;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "revft_out";
  std::size_t threads = 0;  // 0: hardware concurrency, capped by REVFT_THREADS

  ModelConfig model;
  std::string base_checkpoint;  // optional pretrained base for `train`
  TaskSpec task;
  TrainConfig train;
  CacheMode mode = CacheMode::kReversible;
  GradcheckOptions gradcheck;
  SweepSpec sweep;
  InitSweepOptions init_sweep;
  MemoryOptions memory;
};

/// Strict parse; throws Error(kConfig) on unknown keys or bad values.
RunConfig parse_run_config(const nlohmann::json& j);

/// Sets a dotted path ("train.lr") in a JSON document. `value` is parsed as
/// JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Fails with ScalingDegenerate when the run would need the reversible
/// backward pass of a non-invertible coupling.
void require_reversible_ready(const RunConfig& config, CacheMode mode);

/// Worker count after REVFT_THREADS.
std::size_t effective_threads(const RunConfig& config);

}  // namespace revft::cli

#endif  // REVFT_TOOLS_RUN_CONFIG_HPP_
