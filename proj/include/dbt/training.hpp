// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Hybrid spectral loss, noisy/clean pair manifests, the Adam training loop
// with bit-exact resume, and the single-pair overfit oracle.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dbt/model.hpp"
#include "dbt/signal.hpp"

namespace dbt {

struct LossReport {
  double l_ri = 0.0;
  double l_mag = 0.0;
  double l_full = 0.0;
  double mu = 0.5;
};

struct LossTerms {
  Var l_ri, l_mag, l_full;
  LossReport report(double mu) const;
};

// L_RI = mse(real) + mse(imag); L_Mag = mse of magnitudes;
// L_full = mu * L_RI + (1 - mu) * L_Mag. Every plane mean runs over all of
// its elements. Inputs are compressed-domain planes of equal shape.
LossTerms loss_full(const Var& est_real, const Var& est_imag,
                    const Tensor& target_real, const Tensor& target_imag,
                    double mu);

// --- pair manifests ---------------------------------------------------------

struct PairRecord {
  std::string id;
  std::string clean;
  std::string noise;
  double snr_db = 0.0;
  std::size_t noise_offset = 0;
  std::uint64_t seed = 0;
  std::string split = "train";

  bool operator==(const PairRecord&) const = default;
};

struct PairManifest {
  std::vector<PairRecord> pairs;

  // One JSON object per line.
  void save(const std::filesystem::path& path) const;
  static PairManifest load(const std::filesystem::path& path);
  PairManifest split(const std::string& name) const;
};

// SNRs from `snr_min` to `snr_max` in 1 dB steps.
std::vector<double> snr_grid(double snr_min = -5.0, double snr_max = 0.0);

// Draws `count` (clean, noise, snr, cut) tuples. The last
// round(count * valid_fraction) records are marked "valid".
PairManifest build_pairs(const std::vector<std::filesystem::path>& clean,
                         const std::vector<std::filesystem::path>& noise,
                         const std::vector<double>& snrs, std::size_t count,
                         std::uint64_t seed, double valid_fraction = 0.0);

struct NoisyPair {
  std::string id;
  Waveform clean;
  Waveform noisy;
  double snr_db = 0.0;
};

// Regenerates the mixture described by a record. Relative paths resolve
// against `base`.
NoisyPair realize(const PairRecord& rec, const std::filesystem::path& base = {});

// --- optimization -------------------------------------------------------------

struct AdamConfig {
  double lr = 8e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  bool operator==(const AdamConfig&) const = default;
};

class Adam {
 public:
  Adam() = default;
  Adam(const AdamConfig& cfg, const std::vector<Var>& params);
  // Applies one update from the accumulated gradients and returns the
  // pre-clipping gradient norm.
  double step(const std::vector<Var>& params);

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  std::vector<Tensor>& first_moment() { return m_; }
  std::vector<Tensor>& second_moment() { return v_; }
  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainOptions {
  std::size_t epochs = 40;
  std::size_t batch = 4;
  double chunk_seconds = 4.0;
  std::size_t max_steps = 0;         // 0 = run all epochs
  std::size_t validate_every = 0;    // steps; 0 = once per epoch
  std::size_t checkpoint_every = 0;  // steps; 0 = once per epoch
  std::size_t log_every = 1;
  double max_seconds = 0.0;          // wall-clock budget; 0 = none
  AdamConfig adam;
  bool operator==(const TrainOptions&) const = default;
};

// A training example: chunked waveforms and their compressed spectra.
struct Example {
  std::string id;
  Waveform clean, noisy;
  Tensor noisy_real, noisy_imag;    // T x F, compressed
  Tensor clean_real, clean_imag;
};

std::vector<Example> make_examples(const std::vector<NoisyPair>& pairs,
                                   double chunk_seconds,
                                   const StftConfig& stft_cfg,
                                   double compression);
Example make_example(const std::string& id, const Waveform& clean,
                     const Waveform& noisy, const StftConfig& stft_cfg,
                     double compression);

struct TrainState {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t batch_in_epoch = 0;
  double best_valid = 0.0;  // meaningful when has_best
  bool has_best = false;
  Adam adam;
};

struct LogEntry {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  LossReport loss;
  double wall_seconds = 0.0;
  double grad_norm = 0.0;
};

struct TrainHooks {
  // Called after each step; return false to stop early.
  std::function<bool(const LogEntry&)> on_step;
  std::function<void(std::uint64_t step, double valid_loss)> on_validate;
};

struct TrainPaths {
  std::filesystem::path log;         // JSONL, appended
  std::filesystem::path checkpoint;  // directory for last.ckpt / best.ckpt
};

// Deterministic order of example indices for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch);

// Stacks examples into B x 1 x T x F planes.
void stack_batch(const std::vector<const Example*>& batch, Tensor& noisy_real,
                 Tensor& noisy_imag, Tensor& clean_real, Tensor& clean_imag);

// One forward/backward/update on a batch.
LogEntry train_step(DbtModel& model, TrainState& state,
                    const std::vector<const Example*>& batch);

// Mean loss over examples without building a graph.
LossReport evaluate_loss(const DbtModel& model,
                         const std::vector<Example>& examples);

// Runs (or resumes) training from `state`. Throws Error(kNumeric) with a
// diagnostic dump next to the log when the loss becomes non-finite.
void train(DbtModel& model, TrainState& state,
           const std::vector<Example>& train_set,
           const std::vector<Example>& valid_set, const TrainOptions& opts,
           const TrainPaths& paths = {}, const TrainHooks& hooks = {});

// --- overfit oracle -------------------------------------------------------------

struct OverfitOptions {
  std::size_t max_steps = 2000;
  AdamConfig adam{.grad_clip = 5.0};
  // Early stop once both targets are met (checked every `check_every`).
  double target_loss_ratio = 0.1;
  double target_si_sdr = 15.0;
  std::size_t check_every = 25;
  std::uint64_t seed = 1;
};

struct OverfitReport {
  std::vector<double> losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double si_sdr = 0.0;
  std::size_t steps = 0;
};

// Enhances a waveform: stft -> compress -> forward -> decompress -> istft.
// The output has the input's length; an all-zero input is returned as is.
Waveform enhance(const DbtModel& model, const Waveform& noisy,
                 const StftConfig& stft_cfg = {});

OverfitReport overfit_single(DbtModel& model, const NoisyPair& pair,
                             const OverfitOptions& opts,
                             const StftConfig& stft_cfg = {});

}  // namespace dbt
