// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "dbt/error.hpp"
#include "dbt/wav.hpp"

namespace dbt {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t samples_for(double seconds, int rate) {
  require(seconds > 0.0 && rate > 0, ErrorCode::kInvalidArgument,
          "synth: duration and sample rate must be positive");
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

void normalize_peak(Waveform& w, double peak) {
  double m = 0.0;
  for (double v : w.samples) m = std::max(m, std::abs(v));
  if (m > 0.0)
    for (double& v : w.samples) v *= peak / m;
}

struct Plan {
  std::vector<Waveform> clean;
  std::vector<Waveform> noise;
  std::vector<std::size_t> noise_of;  // per pair
  PairManifest manifest;
};

std::string numbered(const char* stem, std::size_t i) {
  std::ostringstream os;
  os << stem << std::setfill('0') << std::setw(4) << i;
  return os.str();
}

Plan plan(const SynthCorpusOptions& o) {
  require(o.minutes > 0.0 && o.utterance_seconds >= 1.0 && o.noise_files >= 1 &&
              o.noise_seconds >= o.utterance_seconds && !o.snrs.empty(),
          ErrorCode::kInvalidArgument, "synth corpus: invalid options");
  const auto count = static_cast<std::size_t>(
      std::max(1.0, std::round(o.minutes * 60.0 / o.utterance_seconds)));
  std::mt19937_64 rng(o.seed);
  Plan p;
  for (std::size_t i = 0; i < o.noise_files; ++i)
    p.noise.push_back(synth_noise(o.noise_seconds, rng()));
  std::uniform_int_distribution<std::size_t> pick_n(0, o.noise_files - 1);
  std::uniform_int_distribution<std::size_t> pick_s(0, o.snrs.size() - 1);
  const auto n_valid = static_cast<std::size_t>(
      std::llround(o.valid_fraction * static_cast<double>(count)));
  for (std::size_t i = 0; i < count; ++i) {
    p.clean.push_back(synth_speech(o.utterance_seconds, rng()));
    PairRecord r;
    const std::size_t n = pick_n(rng);
    r.id = numbered("utt", i);
    r.clean = "clean/" + r.id + ".wav";
    r.noise = "noise/" + numbered("noise", n) + ".wav";
    r.snr_db = o.snrs[pick_s(rng)];
    r.seed = rng();
    r.noise_offset = noise_cut_offset(p.clean.back().size(), p.noise[n].size(), r.seed);
    r.split = i + n_valid >= count ? "valid" : "train";
    p.noise_of.push_back(n);
    p.manifest.pairs.push_back(std::move(r));
  }
  return p;
}

}  // namespace

Waveform synth_speech(double seconds, std::uint64_t seed, int sample_rate) {
  const std::size_t n = samples_for(seconds, sample_rate);
  const double fs = sample_rate;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(n, 0.0);
  std::size_t pos = static_cast<std::size_t>(range(0.02, 0.15) * fs);
  const double nyq = 0.5 * fs;
  while (pos < n) {
    const auto len = static_cast<std::size_t>(range(0.12, 0.35) * fs);
    const double f0a = range(90.0, 260.0);
    const double f0b = f0a * range(0.8, 1.2);
    const double formants[3] = {range(300.0, 900.0), range(900.0, 2500.0),
                                range(2400.0, 3500.0)};
    const double widths[3] = {range(80.0, 160.0), range(120.0, 250.0),
                              range(150.0, 300.0)};
    const double level = range(0.4, 1.0);
    double phase = 0.0;
    for (std::size_t k = 0; k < len && pos + k < n; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(len);
      const double f0 = f0a + (f0b - f0a) * t;
      phase += kTwoPi * f0 / fs;
      const double env = std::sin(std::numbers::pi * t);
      double s = 0.0;
      for (int h = 1; h * f0 < std::min(4000.0, nyq); ++h) {
        const double fh = h * f0;
        double a = 0.03;
        for (int m = 0; m < 3; ++m) {
          const double d = (fh - formants[m]) / widths[m];
          a += std::exp(-0.5 * d * d) / (1.0 + m);
        }
        s += a * std::sin(h * phase);
      }
      w.samples[pos + k] += level * env * s;
    }
    pos += len + static_cast<std::size_t>(range(0.03, 0.2) * fs);
  }
  normalize_peak(w, 0.5);
  return w;
}

Waveform synth_noise(double seconds, std::uint64_t seed, int sample_rate) {
  const std::size_t n = samples_for(seconds, sample_rate);
  const double fs = sample_rate;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // One-pole low-pass (corner near 500 Hz) with a DC blocker, amplitude
  // modulated at a few Hz.
  const double a = std::exp(-kTwoPi * 500.0 / fs);
  const double mod_rate = 2.0 + 4.0 * u(rng);
  const double mod_phase = kTwoPi * u(rng);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  double lp = 0.0, prev = 0.0, hp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lp = a * lp + (1.0 - a) * g(rng);
    hp = 0.995 * hp + lp - prev;
    prev = lp;
    const double m = 1.0 + 0.3 * std::sin(kTwoPi * mod_rate * i / fs + mod_phase);
    w.samples[i] = hp * m + 0.02 * g(rng);
  }
  normalize_peak(w, 0.5);
  return w;
}

std::filesystem::path write_synth_corpus(const std::filesystem::path& dir,
                                         const SynthCorpusOptions& opts) {
  const Plan p = plan(opts);
  std::filesystem::create_directories(dir / "clean");
  std::filesystem::create_directories(dir / "noise");
  for (std::size_t i = 0; i < p.clean.size(); ++i)
    write_wav(dir / p.manifest.pairs[i].clean, p.clean[i], WavFormat::kFloat32);
  for (std::size_t i = 0; i < p.noise.size(); ++i)
    write_wav(dir / "noise" / (numbered("noise", i) + ".wav"), p.noise[i],
              WavFormat::kFloat32);
  const auto manifest = dir / "manifest.jsonl";
  p.manifest.save(manifest);
  return manifest;
}

std::vector<NoisyPair> synth_pairs(const SynthCorpusOptions& opts,
                                   const std::string& split) {
  const Plan p = plan(opts);
  std::vector<NoisyPair> out;
  for (std::size_t i = 0; i < p.clean.size(); ++i) {
    const PairRecord& r = p.manifest.pairs[i];
    if (r.split != split) continue;
    NoisyPair pair;
    pair.id = r.id;
    pair.snr_db = r.snr_db;
    pair.clean = p.clean[i];
    pair.noisy = mix_at_offset(pair.clean, p.noise[p.noise_of[i]], r.snr_db,
                               r.noise_offset).noisy;
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace dbt
