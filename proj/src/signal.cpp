// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/signal.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>

#include "dbt/error.hpp"

namespace dbt {
namespace {

// FFTW planning is not thread-safe; plans are built once per size under a
// lock and then run through the thread-safe new-array execute calls.
struct Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

const Plans& plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, Plans> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* re = fftw_alloc_real(n);
  fftw_complex* cx = fftw_alloc_complex(n / 2 + 1);
  Plans p;
  const int ni = static_cast<int>(n);
  p.forward = fftw_plan_dft_r2c_1d(ni, re, cx, FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_1d(ni, cx, re, FFTW_ESTIMATE);
  fftw_free(re);
  fftw_free(cx);
  return cache.emplace(n, p).first->second;
}

struct RealBuf {
  explicit RealBuf(std::size_t n) : p(fftw_alloc_real(n)) {}
  ~RealBuf() { fftw_free(p); }
  RealBuf(const RealBuf&) = delete;
  RealBuf& operator=(const RealBuf&) = delete;
  double* p;
};

struct ComplexBuf {
  explicit ComplexBuf(std::size_t n) : p(fftw_alloc_complex(n)) {}
  ~ComplexBuf() { fftw_free(p); }
  ComplexBuf(const ComplexBuf&) = delete;
  ComplexBuf& operator=(const ComplexBuf&) = delete;
  fftw_complex* p;
};

// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<long>(n) ? i : period - i);
}

}  // namespace

double Waveform::energy() const {
  double e = 0.0;
  for (double v : samples) e += v * v;
  return e;
}

void StftConfig::validate() const {
  require(hop > 0 && hop <= win_length && win_length <= fft_size,
          ErrorCode::kConfig,
          "stft: need 0 < hop <= win_length <= fft_size");
  require(win_length % 2 == 0, ErrorCode::kConfig,
          "stft: win_length must be even for centered frames");
  require(sample_rate > 0, ErrorCode::kConfig, "stft: sample_rate must be > 0");
}

Tensor Spectrogram::magnitude() const {
  Tensor m(real.shape());
  for (std::size_t i = 0; i < m.numel(); ++i) m[i] = std::hypot(real[i], imag[i]);
  return m;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  return w;
}

Spectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  require(!w.samples.empty(), ErrorCode::kInvalidArgument,
          "stft: empty waveform");
  for (double v : w.samples)
    require(std::isfinite(v), ErrorCode::kNumeric,
            "stft: waveform has non-finite samples");
  require(w.sample_rate == cfg.sample_rate, ErrorCode::kInvalidArgument,
          "stft: sample rate " + std::to_string(w.sample_rate) +
              " does not match " + std::to_string(cfg.sample_rate));
  const std::size_t n = w.size(), T = cfg.frames(n), F = cfg.bins();
  const std::size_t half = cfg.win_length / 2;
  const std::size_t lead = (cfg.fft_size - cfg.win_length) / 2;
  const auto win = hann_window(cfg.win_length);
  const Plans& plans = plans_for(cfg.fft_size);

  Spectrogram s{Tensor({T, F}), Tensor({T, F})};
  RealBuf frame(cfg.fft_size);
  ComplexBuf spec(F);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill_n(frame.p, cfg.fft_size, 0.0);
    for (std::size_t k = 0; k < cfg.win_length; ++k) {
      const long idx = static_cast<long>(t * cfg.hop + k) - static_cast<long>(half);
      frame.p[lead + k] = w.samples[reflect(idx, n)] * win[k];
    }
    fftw_execute_dft_r2c(plans.forward, frame.p, spec.p);
    for (std::size_t f = 0; f < F; ++f) {
      s.real[t * F + f] = spec.p[f][0];
      s.imag[t * F + f] = spec.p[f][1];
    }
  }
  return s;
}

Waveform istft(const Spectrogram& s, const StftConfig& cfg,
               std::size_t out_length) {
  cfg.validate();
  require(!s.compressed, ErrorCode::kInvalidArgument,
          "istft: spectrogram is compressed; decompress first");
  require(s.real.rank() == 2 && s.real.shape() == s.imag.shape() &&
              s.bins() == cfg.bins(),
          ErrorCode::kShapeMismatch, "istft: expected T x " +
                                         std::to_string(cfg.bins()) + " planes");
  const std::size_t T = s.frames(), F = cfg.bins();
  require(T == cfg.frames(out_length), ErrorCode::kInvalidArgument,
          "istft: " + std::to_string(T) + " frames cannot produce " +
              std::to_string(out_length) + " samples");
  const std::size_t half = cfg.win_length / 2;
  const std::size_t lead = (cfg.fft_size - cfg.win_length) / 2;
  const std::size_t padded = (T - 1) * cfg.hop + cfg.win_length;
  const auto win = hann_window(cfg.win_length);
  const Plans& plans = plans_for(cfg.fft_size);

  std::vector<double> acc(padded, 0.0), norm(padded, 0.0);
  RealBuf frame(cfg.fft_size);
  ComplexBuf spec(F);
  const double inv_n = 1.0 / static_cast<double>(cfg.fft_size);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t f = 0; f < F; ++f) {
      spec.p[f][0] = s.real[t * F + f];
      spec.p[f][1] = s.imag[t * F + f];
    }
    // The c2r transform ignores the imaginary parts of DC and Nyquist.
    fftw_execute_dft_c2r(plans.inverse, spec.p, frame.p);
    for (std::size_t k = 0; k < cfg.win_length; ++k) {
      acc[t * cfg.hop + k] += frame.p[lead + k] * inv_n * win[k];
      norm[t * cfg.hop + k] += win[k] * win[k];
    }
  }
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.resize(out_length);
  for (std::size_t i = 0; i < out_length; ++i) {
    const double d = norm[i + half];
    out.samples[i] = d > 1e-12 ? acc[i + half] / d : 0.0;
  }
  return out;
}

Spectrogram compress(const Spectrogram& s, double exponent) {
  require(!s.compressed, ErrorCode::kInvalidArgument,
          "compress: spectrogram already compressed");
  require(exponent > 0.0 && exponent <= 1.0, ErrorCode::kInvalidArgument,
          "compress: exponent must lie in (0, 1]");
  Spectrogram out{Tensor(s.real.shape()), Tensor(s.imag.shape()), true,
                  exponent};
  for (std::size_t i = 0; i < s.real.numel(); ++i) {
    const double m = std::hypot(s.real[i], s.imag[i]);
    const double g = m > 0.0 ? std::pow(m, exponent - 1.0) : 0.0;
    out.real[i] = s.real[i] * g;
    out.imag[i] = s.imag[i] * g;
  }
  return out;
}

Spectrogram decompress(const Spectrogram& s) {
  require(s.compressed, ErrorCode::kInvalidArgument,
          "decompress: spectrogram is not compressed");
  const double inv = 1.0 / s.exponent;
  Spectrogram out{Tensor(s.real.shape()), Tensor(s.imag.shape()), false, 1.0};
  for (std::size_t i = 0; i < s.real.numel(); ++i) {
    const double m = std::hypot(s.real[i], s.imag[i]);
    const double g = m > 0.0 ? std::pow(m, inv - 1.0) : 0.0;
    out.real[i] = s.real[i] * g;
    out.imag[i] = s.imag[i] * g;
  }
  return out;
}

std::size_t noise_cut_offset(std::size_t clean_length, std::size_t noise_length,
                             std::uint64_t seed) {
  require(noise_length >= clean_length, ErrorCode::kInvalidArgument,
          "mix: noise (" + std::to_string(noise_length) +
              " samples) shorter than clean (" + std::to_string(clean_length) +
              ")");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, noise_length - clean_length);
  return pick(rng);
}

Mixture mix_at_offset(const Waveform& clean, const Waveform& noise,
                      double snr_db, std::size_t offset) {
  require(clean.sample_rate == noise.sample_rate, ErrorCode::kInvalidArgument,
          "mix: sample rates differ");
  require(offset + clean.size() <= noise.size(), ErrorCode::kInvalidArgument,
          "mix: noise cut runs past the end of the noise signal");
  require(std::isfinite(snr_db), ErrorCode::kInvalidArgument,
          "mix: snr must be finite");
  const double ec = clean.energy();
  double en = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i)
    en += noise.samples[offset + i] * noise.samples[offset + i];
  require(ec > 0.0, ErrorCode::kInvalidArgument,
          "mix: clean signal is silent, SNR undefined");
  require(en > 0.0, ErrorCode::kInvalidArgument,
          "mix: noise cut is silent, SNR undefined");
  Mixture m;
  m.noise_offset = offset;
  m.noise_gain = std::sqrt(ec / (en * std::pow(10.0, snr_db / 10.0)));
  m.noisy.sample_rate = m.scaled_noise.sample_rate = clean.sample_rate;
  m.noisy.samples.resize(clean.size());
  m.scaled_noise.samples.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    m.scaled_noise.samples[i] = m.noise_gain * noise.samples[offset + i];
    m.noisy.samples[i] = clean.samples[i] + m.scaled_noise.samples[i];
  }
  return m;
}

Mixture mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db,
                   std::uint64_t seed) {
  return mix_at_offset(clean, noise, snr_db,
                       noise_cut_offset(clean.size(), noise.size(), seed));
}

std::vector<Waveform> chunk(const Waveform& w, double seconds) {
  require(seconds > 0.0 && w.sample_rate > 0, ErrorCode::kInvalidArgument,
          "chunk: length and sample rate must be positive");
  const auto len = static_cast<std::size_t>(std::llround(seconds * w.sample_rate));
  require(len > 0, ErrorCode::kInvalidArgument, "chunk: zero-length segments");
  const auto min_tail = static_cast<std::size_t>(w.sample_rate);
  std::vector<Waveform> out;
  for (std::size_t start = 0; start < w.size(); start += len) {
    const std::size_t n = std::min(len, w.size() - start);
    if (n < len && n < min_tail) break;
    Waveform seg;
    seg.sample_rate = w.sample_rate;
    seg.samples.assign(len, 0.0);
    std::copy_n(w.samples.begin() + static_cast<long>(start), n,
                seg.samples.begin());
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace dbt
