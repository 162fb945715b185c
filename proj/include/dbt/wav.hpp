// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Mono RIFF/WAVE files, 16-bit PCM or 32-bit float.

#pragma once

#include <filesystem>

#include "dbt/signal.hpp"

namespace dbt {

enum class WavFormat { kPcm16, kFloat32 };

Waveform read_wav(const std::filesystem::path& path);
// Like read_wav, but rejects files whose rate differs from `expected_rate`.
Waveform read_wav(const std::filesystem::path& path, int expected_rate);
void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavFormat format = WavFormat::kPcm16);

}  // namespace dbt
