// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// The dual-branch enhancement network: a magnitude branch that predicts a
// spectral gain and a complex branch that predicts residual real/imaginary
// detail, coupled through gated interaction after every attention block.

#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dbt/attention.hpp"
#include "dbt/signal.hpp"

namespace dbt {

enum class Variant { kDbt, kMebOnly, kCpbOnly, kDcb, kDbtSpade };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  std::size_t channels = 64;
  // Width of the attention stack; a 1x1 projection bridges it to `channels`
  // when the two differ.
  std::size_t attention_dim = 64;
  std::size_t heads = 4;
  std::size_t blocks = 4;
  std::vector<std::size_t> dilations{1, 2, 4, 8};
  std::size_t depth = 1;
  std::size_t bins = 161;
  Variant variant = Variant::kDbt;
  bool use_time = true;
  bool use_freq = true;
  bool use_aggregate = true;
  bool interaction = true;
  // Dual-branch models run both streams through one set of transformer
  // sublayers; each stream keeps its own adaptive weights and projections.
  bool shared_transformer = true;
  // Collect aggregation inputs before (true) or after (false) interaction.
  bool collect_before_interaction = false;
  double mu = 0.5;
  double compression = 0.5;
  double phase_eps = 1e-8;

  bool dual_branch() const {
    return variant != Variant::kMebOnly && variant != Variant::kCpbOnly;
  }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Named configurations: "dbt", "meb", "cpb", "dcb", "dbt-spade", "micro",
// "micro-meb" and the rows of the ablation table (see ablation_rows()).
ModelConfig preset(const std::string& name);

struct AblationRow {
  std::string name;
  ModelConfig config;
  double reference_params_m;  // millions
  double reference_macs_g;    // G per second of audio
};
std::vector<AblationRow> ablation_rows();

// All planes are B x 1 x T x F in the compressed domain. Fields a variant
// does not produce stay undefined.
struct EnhancementOutput {
  Var mask;
  Var meb_real, meb_imag;
  Var cpb_real, cpb_imag;
  Var final_real, final_imag;
};

// Overrides used to probe the reconstruction path.
struct ForwardProbe {
  std::optional<double> mask;
  std::optional<double> residual;
};

// Per-call diagnostics.
struct ForwardTrace {
  std::vector<Shape> encoder_out;      // per encoder
  std::vector<Shape> time_fold;        // folded sequence shape (first block)
  std::vector<Shape> freq_fold;
  std::vector<Tensor> aggregate_weights;  // per branch, B x N
  std::vector<Shape> decoder_out;
};

class DbtModel {
 public:
  DbtModel(const ModelConfig& cfg, std::uint64_t seed);
  DbtModel(const DbtModel&) = delete;
  DbtModel& operator=(const DbtModel&) = delete;

  // real / imag: compressed noisy planes, B x 1 x T x F.
  EnhancementOutput forward(const Tensor& real, const Tensor& imag,
                            const ForwardProbe* probe = nullptr,
                            ForwardTrace* trace = nullptr) const;
  // Single compressed spectrogram.
  EnhancementOutput forward(const Spectrogram& noisy) const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

 private:
  struct Branch;
  struct Gate {
    nn::Conv2d conv;
    nn::LayerNormCF norm;
  };

  Var interact(const Gate& g, const Var& self, const Var& other) const;

  ModelConfig cfg_;
  nn::ParamStore params_;
  std::vector<nn::Encoder> encoders_;
  std::vector<std::shared_ptr<Branch>> branches_;
  std::vector<std::vector<nn::TfCore>> cores_;  // one set, or one per branch
  // gates_[i][d]: block i, d = 0 into branch 0, d = 1 into branch 1.
  std::vector<std::array<Gate, 2>> gates_;
};

std::size_t count_params(const DbtModel& m);
// Analytic multiply-accumulate count for `seconds` of 16 kHz audio under the
// default STFT (frames = 1 + samples/hop).
double count_macs(const ModelConfig& cfg, double seconds = 1.0,
                  const StftConfig& stft_cfg = {});
// The same quantity measured by running a forward pass.
double traced_macs(const DbtModel& m, double seconds = 1.0,
                   const StftConfig& stft_cfg = {});

}  // namespace dbt
