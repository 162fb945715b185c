// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Objective waveform metrics and corpus-level scoring.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dbt/signal.hpp"

namespace dbt {

class DbtModel;
struct NoisyPair;

// (SI-)SDR values are clamped to +-kSdrClampDb.
inline constexpr double kSdrClampDb = 60.0;

// 10 log10(|ref|^2 / |ref - est|^2).
double sdr(const Waveform& est, const Waveform& ref);
// SDR of est against its projection onto ref; invariant to scaling est.
double si_sdr(const Waveform& est, const Waveform& ref);

struct SegSnrOptions {
  std::size_t frame = 320;
  std::size_t hop = 160;
  double floor_db = -10.0;
  double ceil_db = 35.0;
  // Frames whose reference energy is at most this fraction of the loudest
  // frame's energy are skipped.
  double silence = 1e-8;
};
double segsnr(const Waveform& est, const Waveform& ref,
              const SegSnrOptions& opts = {});

// Runs `command enhanced.wav clean.wav` and reads one line of output:
// either a bare number (stored under `name`) or whitespace-separated
// key=value pairs (stored as name.key).
struct ExternalScorer {
  std::string name;
  std::string command;
  std::map<std::string, double> score(const Waveform& enhanced,
                                      const Waveform& clean) const;
};

struct UtteranceScore {
  std::string id;
  double snr_db = 0.0;
  std::map<std::string, double> scores;
};

struct MetricReport {
  std::vector<UtteranceScore> utterances;

  std::vector<std::string> metric_names() const;
  // Mean of each metric per input SNR, ordered by SNR.
  std::map<double, std::map<std::string, double>> bucket_means() const;
  std::map<std::string, double> overall_means() const;
  // Rows are SNR buckets plus "avg", columns are metrics.
  std::string table() const;
  // One JSON object per utterance.
  void save_jsonl(const std::filesystem::path& path) const;
};

// Metrics understood by evaluate_corpus. Each adds three columns: the
// enhanced score, the noisy-input score (suffix "_noisy") and their
// difference (prefix "d_").
inline const std::vector<std::string> kDefaultMetrics = {"sdr", "si_sdr",
                                                         "segsnr"};

MetricReport evaluate_corpus(const DbtModel& model,
                             const std::vector<NoisyPair>& pairs,
                             const std::vector<std::string>& metrics =
                                 kDefaultMetrics,
                             const StftConfig& stft_cfg = {},
                             const std::vector<ExternalScorer>& external = {});

}  // namespace dbt
