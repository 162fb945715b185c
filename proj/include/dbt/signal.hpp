// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Waveform <-> complex spectrogram conversion, power-law compression and
// noisy/clean pair mixing.

#pragma once

#include <cstdint>
#include <vector>

#include "dbt/tensor.hpp"

namespace dbt {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const noexcept { return samples.size(); }
  double energy() const;
};

struct StftConfig {
  std::size_t fft_size = 320;
  std::size_t win_length = 320;
  std::size_t hop = 160;
  int sample_rate = 16000;

  std::size_t bins() const { return fft_size / 2 + 1; }
  // Frames produced for `length` samples under centered analysis.
  std::size_t frames(std::size_t length) const { return 1 + length / hop; }
  void validate() const;
  bool operator==(const StftConfig&) const = default;
};

// T x F real and imaginary planes.
struct Spectrogram {
  Tensor real;
  Tensor imag;
  bool compressed = false;
  double exponent = 1.0;

  std::size_t frames() const { return real.dim(0); }
  std::size_t bins() const { return real.dim(1); }
  Tensor magnitude() const;
};

// Periodic Hann window.
std::vector<double> hann_window(std::size_t n);

// Frames are centered: the signal is reflect-padded by win_length/2 on
// both sides, so frame t covers samples [t*hop - win/2, t*hop + win/2).
Spectrogram stft(const Waveform& w, const StftConfig& cfg);
// Weighted overlap-add, normalized by the summed squared window.
Waveform istft(const Spectrogram& s, const StftConfig& cfg,
               std::size_t out_length);

// |X|^c with the phase of X kept.
Spectrogram compress(const Spectrogram& s, double exponent = 0.5);
Spectrogram decompress(const Spectrogram& s);

struct Mixture {
  Waveform noisy;
  Waveform scaled_noise;
  std::size_t noise_offset = 0;
  double noise_gain = 1.0;
};

// Offset of a random contiguous noise cut of `clean_length` samples.
std::size_t noise_cut_offset(std::size_t clean_length, std::size_t noise_length,
                             std::uint64_t seed);
// Mixes a cut starting at `offset`, scaled so that the clean-to-noise
// energy ratio equals snr_db.
Mixture mix_at_offset(const Waveform& clean, const Waveform& noise,
                      double snr_db, std::size_t offset);
Mixture mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db,
                   std::uint64_t seed);

// Fixed-length segments. A remainder shorter than one second is dropped;
// a longer one is zero-padded to full length.
std::vector<Waveform> chunk(const Waveform& w, double seconds);

}  // namespace dbt
