// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Run configuration files. The format is JSON with a schema_version field;
// unknown keys and ill-typed values are rejected with ErrorCode::kConfig.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dbt/model.hpp"
#include "dbt/signal.hpp"
#include "dbt/training.hpp"

namespace dbt {

inline constexpr int kConfigSchemaVersion = 1;

struct DataPaths {
  std::filesystem::path train_manifest;
  std::filesystem::path valid_manifest;
  std::filesystem::path test_manifest;
  // Relative audio paths in manifests resolve against this directory;
  // empty means the manifest's own directory.
  std::filesystem::path audio_root;
  bool operator==(const DataPaths&) const = default;
};

struct AuditTolerance {
  double params = 0.10;  // relative
  double macs = 0.20;
  double seconds = 1.0;  // audio length the MAC count refers to
  bool operator==(const AuditTolerance&) const = default;
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  ModelConfig model;
  StftConfig stft;
  TrainOptions train;
  DataPaths data;
  std::filesystem::path output_dir = "run";
  AuditTolerance audit;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

std::string to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

std::string to_json(const RunConfig& cfg);
// A "preset" key inside "model" seeds the model section before the
// remaining model keys are applied.
RunConfig run_config_from_json(const std::string& text);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace dbt
