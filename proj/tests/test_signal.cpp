// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "dbt/error.hpp"
#include "dbt/signal.hpp"
#include "dbt/wav.hpp"

using namespace dbt;

namespace {

Waveform noise_wave(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Waveform w;
  w.samples.resize(n);
  for (double& v : w.samples) v = nd(rng);
  return w;
}

Waveform chirpish(std::size_t n) {
  Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i);
    w.samples[i] = std::sin(0.37 * d) + 0.5 * std::cos(0.011 * d * d / 10.0);
  }
  return w;
}

}  // namespace

TEST_CASE("frame count follows centered padding") {
  StftConfig cfg;
  Waveform w = noise_wave(48000, 1);
  Spectrogram s = stft(w, cfg);
  CHECK(s.frames() == 301);
  CHECK(s.bins() == 161);
  CHECK(cfg.frames(16000) == 101);
}

TEST_CASE("stft matches an independent FFT reference") {
  // Values from numpy.fft.rfft on the same reflect-padded, Hann-windowed
  // frames.
  Spectrogram s = stft(chirpish(1000), StftConfig{});
  REQUIRE(s.frames() == 7);
  struct Ref {
    std::size_t t, f;
    double re, im;
  };
  const Ref refs[] = {{0, 0, 25.028429362939136, 0.0},
                      {0, 19, 10.586033039747065, 0.0},
                      {3, 19, -78.35875647582114, -7.864261744697982},
                      {6, 100, -4.3173168377475, -6.36686114524376},
                      {6, 160, -0.9044183727322554, 0.0}};
  for (const Ref& r : refs) {
    CHECK(s.real[r.t * 161 + r.f] == doctest::Approx(r.re).epsilon(1e-10));
    CHECK(std::abs(s.imag[r.t * 161 + r.f] - r.im) < 1e-9);
  }
}

TEST_CASE("1 kHz sine peaks at bin 20") {
  Waveform w;
  w.samples.resize(16000);
  for (std::size_t i = 0; i < w.size(); ++i)
    w.samples[i] = std::sin(2.0 * std::numbers::pi * 1000.0 * i / 16000.0);
  Spectrogram s = stft(w, StftConfig{});
  Tensor m = s.magnitude();
  for (std::size_t t = 2; t + 2 < s.frames(); ++t) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < 161; ++f)
      if (m[t * 161 + f] > m[t * 161 + best]) best = f;
    CHECK(best == 20);
  }
}

TEST_CASE("zero waveform gives zero spectrogram; linearity") {
  StftConfig cfg;
  Waveform z;
  z.samples.assign(800, 0.0);
  Spectrogram s = stft(z, cfg);
  for (double v : s.real.values()) CHECK(v == 0.0);
  Waveform a = noise_wave(1200, 2), b = a;
  for (double& v : b.samples) v *= -2.5;
  Spectrogram sa = stft(a, cfg), sb = stft(b, cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < sa.real.numel(); ++i) {
    worst = std::max(worst, std::abs(sb.real[i] + 2.5 * sa.real[i]));
    worst = std::max(worst, std::abs(sb.imag[i] + 2.5 * sa.imag[i]));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("istft inverts stft") {
  StftConfig cfg;
  for (std::size_t n : {640ul, 641ul, 1000ul, 16000ul, 16123ul}) {
    Waveform w = noise_wave(n, n);
    Waveform r = istft(stft(w, cfg), cfg, n);
    REQUIRE(r.size() == n);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      worst = std::max(worst, std::abs(r.samples[i] - w.samples[i]));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("stft contract errors") {
  StftConfig cfg;
  CHECK_THROWS_AS(stft(Waveform{}, cfg), Error);
  Waveform w = noise_wave(500, 3);
  w.sample_rate = 8000;
  CHECK_THROWS_AS(stft(w, cfg), Error);
  w.sample_rate = 16000;
  Spectrogram c = compress(stft(w, cfg));
  CHECK_THROWS_AS(istft(c, cfg, 500), Error);
  CHECK_THROWS_AS(compress(c), Error);
  CHECK_THROWS_AS(istft(stft(w, cfg), cfg, 900), Error);
}

TEST_CASE("compression keeps phase and inverts") {
  Spectrogram s{Tensor({1, 3}), Tensor({1, 3})};
  s.real[0] = 3.0;
  s.imag[0] = 4.0;
  s.real[2] = -0.25;
  s.imag[2] = 1e-3;
  Spectrogram c = compress(s, 0.5);
  CHECK(c.compressed);
  CHECK(c.real[0] == doctest::Approx(1.3416407864998738).epsilon(1e-12));
  CHECK(c.imag[0] == doctest::Approx(1.788854381999832).epsilon(1e-12));
  CHECK(c.real[1] == 0.0);
  CHECK(c.imag[1] == 0.0);
  Spectrogram back = decompress(c);
  for (std::size_t i : {0ul, 2ul}) {
    CHECK(std::abs(back.real[i] - s.real[i]) <= 1e-12 * std::abs(s.real[i]));
    CHECK(std::abs(back.imag[i] - s.imag[i]) <= 1e-12 * std::abs(s.imag[i]));
  }
  Spectrogram id = compress(s, 1.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(id.real[i] == s.real[i]);
  CHECK_THROWS_AS(compress(s, 0.0), Error);
  CHECK_THROWS_AS(decompress(s), Error);
}

TEST_CASE("mixing hits the requested SNR") {
  Waveform clean = noise_wave(4000, 4, 0.2);
  Waveform noise = noise_wave(20000, 5, 0.7);
  for (double snr : {-5.0, -2.0, 0.0, 3.5, 20.0}) {
    Mixture m = mix_at_snr(clean, noise, snr, 17);
    const double measured =
        10.0 * std::log10(clean.energy() / m.scaled_noise.energy());
    CHECK(std::abs(measured - snr) < 1e-4);
    for (std::size_t i = 0; i < clean.size(); ++i)
      REQUIRE(m.noisy.samples[i] ==
              clean.samples[i] + m.scaled_noise.samples[i]);
  }
  Mixture a = mix_at_snr(clean, noise, 0.0, 99), b = mix_at_snr(clean, noise, 0.0, 99);
  CHECK(a.noise_offset == b.noise_offset);
  CHECK(a.noise_gain == b.noise_gain);
  CHECK(a.noise_offset + clean.size() <= noise.size());
}

TEST_CASE("noise gain solved from the energy ratio") {
  Waveform clean, noise;
  clean.samples = {2.0, 0.0};  // energy 4
  noise.samples = {0.0, 1.0};  // energy 1
  Mixture m = mix_at_offset(clean, noise, 6.0206, 0);
  CHECK(m.noise_gain == doctest::Approx(0.9999999900159479).epsilon(1e-12));
}

TEST_CASE("silent inputs make the SNR undefined") {
  Waveform clean, noise = noise_wave(100, 6);
  clean.samples.assign(50, 0.0);
  CHECK_THROWS_AS(mix_at_snr(clean, noise, 0.0, 1), Error);
  Waveform c2 = noise_wave(50, 7), n2;
  n2.samples.assign(100, 0.0);
  CHECK_THROWS_AS(mix_at_snr(c2, n2, 0.0, 1), Error);
  CHECK_THROWS_AS(mix_at_snr(noise, c2, 0.0, 1), Error);
}

TEST_CASE("chunking drops short tails and pads long ones") {
  Waveform w = noise_wave(16000 * 3 + 8000, 8);  // 3.5 s
  auto parts = chunk(w, 2.0);
  REQUIRE(parts.size() == 2);
  CHECK(parts[1].size() == 32000);
  CHECK(parts[1].samples[24000 - 1] == w.samples[56000 - 1]);
  CHECK(parts[1].samples[24000] == 0.0);
  Waveform short_tail = noise_wave(16000 * 2 + 8000, 9);  // 2.5 s
  CHECK(chunk(short_tail, 2.0).size() == 1);
  CHECK(chunk(noise_wave(8000, 10), 2.0).empty());
}

TEST_CASE("wav round trip in both sample formats") {
  const auto dir = std::filesystem::temp_directory_path();
  Waveform w = noise_wave(1234, 11, 0.2);
  const auto f32 = dir / "dbtnet_test_f32.wav";
  write_wav(f32, w, WavFormat::kFloat32);
  Waveform r = read_wav(f32, 16000);
  REQUIRE(r.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(std::abs(r.samples[i] - w.samples[i]) < 1e-7);
  const auto p16 = dir / "dbtnet_test_p16.wav";
  write_wav(p16, w, WavFormat::kPcm16);
  r = read_wav(p16);
  REQUIRE(r.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(std::abs(r.samples[i] - w.samples[i]) <= 0.5 / 32768.0 + 1e-12);
  w.sample_rate = 8000;
  write_wav(p16, w);
  CHECK_THROWS_AS(read_wav(p16, 16000), Error);
  CHECK_THROWS_AS(read_wav(dir / "dbtnet_missing.wav"), Error);
  std::filesystem::remove(f32);
  std::filesystem::remove(p16);
}
