// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//
//   bytes 0..7    magic "REVFTCK1"
//   bytes 8..15   header length H, unsigned 64-bit little-endian
//   next H bytes  UTF-8 JSON header
//   remainder     raw little-endian tensor buffers
//
// Header:
//   {"format": "revft-checkpoint", "version": 1,
//    "tensors": [{"name", "shape", "precision", "offset", "nbytes"}, ...],
//    "metadata": {...}}
//
// `offset` counts from the first byte after the header. Tensors are stored in
// parameter-visit order, densely packed.
#ifndef REVFT_CHECKPOINT_HPP_
#define REVFT_CHECKPOINT_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "revft/model.hpp"

namespace revft {

inline constexpr std::string_view kCheckpointMagic = "REVFTCK1";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::string metadata_json = "{}";  // a JSON object

  const Tensor* find(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Strict JSON form of a ModelConfig; unknown keys are ConfigErrors. Missing
/// lambda/beta fall back to the kind's defaults.
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(std::string_view json);

/// Every parameter of the model plus its config under metadata.model.
Checkpoint model_checkpoint(MeftModel& model);
MeftModel model_from_checkpoint(const Checkpoint& ckpt);

void save_model(const std::string& path, MeftModel& model);
MeftModel load_model(const std::string& path);

/// Base (embedding + layers) only, for handing a pretrained base to assembly.
Checkpoint base_checkpoint(BaseModel& base);
BaseModel base_from_checkpoint(const Checkpoint& ckpt);

/// Copies tensors into same-named parameters. Every parameter must be
/// present with matching shape and precision.
void restore_params(const ParamList& params, const Checkpoint& ckpt);

}  // namespace revft

#endif  // REVFT_CHECKPOINT_HPP_
