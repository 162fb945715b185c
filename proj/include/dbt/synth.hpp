// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Synthetic corpora for desk-scale runs: harmonic "syllables" with formant
// envelopes stand in for speech, and low-pass shaped, slowly modulated
// Gaussian noise stands in for the interference.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dbt/signal.hpp"
#include "dbt/training.hpp"

namespace dbt {

Waveform synth_speech(double seconds, std::uint64_t seed, int sample_rate = 16000);
Waveform synth_noise(double seconds, std::uint64_t seed, int sample_rate = 16000);

struct SynthCorpusOptions {
  double minutes = 10.0;          // total clean speech
  double utterance_seconds = 4.0;
  std::size_t noise_files = 4;
  double noise_seconds = 60.0;
  double valid_fraction = 0.1;
  std::vector<double> snrs = snr_grid(-5.0, 0.0);
  std::uint64_t seed = 0;
};

// Writes clean/*.wav and noise/*.wav under `dir` plus manifest.jsonl with
// one pair per clean utterance (paths relative to `dir`). Returns the
// manifest path.
std::filesystem::path write_synth_corpus(const std::filesystem::path& dir,
                                         const SynthCorpusOptions& opts);

// The same corpus built in memory; `split` selects "train" or "valid".
std::vector<NoisyPair> synth_pairs(const SynthCorpusOptions& opts,
                                   const std::string& split);

}  // namespace dbt
