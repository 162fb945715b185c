// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Single-file checkpoints.
//
// Layout (little-endian):
//   magic     8 bytes  "DBTCKPT\0"
//   version   u32
//   meta_len  u64, followed by meta_len bytes of JSON: model config, seed,
//             and (when present) step / epoch / batch cursor, best
//             validation loss and optimizer settings
//   count     u64 tensors, each:
//             name_len u32, name bytes, rank u32, dims u64[rank],
//             values f64[prod(dims)]
// Parameters are stored as "param/<name>"; optimizer moments as
// "adam.m/<name>" and "adam.v/<name>".

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>

#include "dbt/model.hpp"
#include "dbt/training.hpp"

namespace dbt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const DbtModel& model,
                     std::uint64_t seed, const TrainState* state = nullptr);

struct LoadedCheckpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::unique_ptr<DbtModel> model;
  std::optional<TrainState> state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dbt
