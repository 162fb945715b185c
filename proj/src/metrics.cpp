// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/metrics.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dbt/error.hpp"
#include "dbt/training.hpp"
#include "dbt/wav.hpp"

namespace dbt {

namespace {

double clamp_db(double ratio) {
  if (std::isnan(ratio)) return -kSdrClampDb;
  const double db = 10.0 * std::log10(ratio);
  return std::clamp(db, -kSdrClampDb, kSdrClampDb);
}

void check_pair(const Waveform& est, const Waveform& ref, const char* who) {
  require(est.size() == ref.size(), ErrorCode::kShapeMismatch,
          std::string(who) + ": lengths differ (" + std::to_string(est.size()) +
              " vs " + std::to_string(ref.size()) + ")");
  require(!ref.samples.empty(), ErrorCode::kInvalidArgument,
          std::string(who) + ": empty reference");
}

double ratio(double num, double den) {
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

}  // namespace

double sdr(const Waveform& est, const Waveform& ref) {
  check_pair(est, ref, "sdr");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double e = ref.samples[i] - est.samples[i];
    num += ref.samples[i] * ref.samples[i];
    den += e * e;
  }
  require(num > 0.0, ErrorCode::kInvalidArgument, "sdr: silent reference");
  return clamp_db(ratio(num, den));
}

double si_sdr(const Waveform& est, const Waveform& ref) {
  check_pair(est, ref, "si_sdr");
  double rr = 0.0, er = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    rr += ref.samples[i] * ref.samples[i];
    er += est.samples[i] * ref.samples[i];
  }
  require(rr > 0.0, ErrorCode::kInvalidArgument, "si_sdr: silent reference");
  const double alpha = er / rr;
  double target = 0.0, resid = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double p = alpha * ref.samples[i];
    const double r = est.samples[i] - p;
    target += p * p;
    resid += r * r;
  }
  if (target == 0.0) return -kSdrClampDb;
  return clamp_db(ratio(target, resid));
}

double segsnr(const Waveform& est, const Waveform& ref,
              const SegSnrOptions& opts) {
  check_pair(est, ref, "segsnr");
  require(opts.frame > 0 && opts.hop > 0 && opts.floor_db < opts.ceil_db,
          ErrorCode::kInvalidArgument, "segsnr: invalid options");
  const std::size_t n = ref.size();
  const std::size_t frame = std::min(opts.frame, n);
  const std::size_t frames = 1 + (n - frame) / opts.hop;
  std::vector<double> er(frames), ee(frames);
  double peak = 0.0;
  for (std::size_t k = 0; k < frames; ++k) {
    const std::size_t start = k * opts.hop;
    for (std::size_t i = start; i < start + frame; ++i) {
      const double e = ref.samples[i] - est.samples[i];
      er[k] += ref.samples[i] * ref.samples[i];
      ee[k] += e * e;
    }
    peak = std::max(peak, er[k]);
  }
  require(peak > 0.0, ErrorCode::kInvalidArgument, "segsnr: silent reference");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < frames; ++k) {
    if (er[k] <= opts.silence * peak) continue;
    const double r = ratio(er[k], ee[k]);
    const double db = std::isinf(r) ? opts.ceil_db : 10.0 * std::log10(r);
    sum += std::clamp(db, opts.floor_db, opts.ceil_db);
    ++used;
  }
  return sum / static_cast<double>(used);
}

std::map<std::string, double> ExternalScorer::score(
    const Waveform& enhanced, const Waveform& clean) const {
  static std::atomic<unsigned> counter{0};
  const auto dir = std::filesystem::temp_directory_path();
  const std::string stem = "dbtnet-" + std::to_string(::getpid()) + "-" +
                           std::to_string(counter++);
  const auto enh_path = dir / (stem + "-enh.wav");
  const auto ref_path = dir / (stem + "-ref.wav");
  write_wav(enh_path, enhanced, WavFormat::kFloat32);
  write_wav(ref_path, clean, WavFormat::kFloat32);
  const std::string cmd = command + " " + shell_quote(enh_path.string()) + " " +
                          shell_quote(ref_path.string());
  std::string line;
  int status = -1;
  if (FILE* pipe = ::popen(cmd.c_str(), "r")) {
    char buf[4096];
    if (std::fgets(buf, sizeof buf, pipe)) line = buf;
    while (std::fgets(buf, sizeof buf, pipe)) {
    }
    status = ::pclose(pipe);
  }
  std::error_code ec;
  std::filesystem::remove(enh_path, ec);
  std::filesystem::remove(ref_path, ec);
  require(status == 0, ErrorCode::kIo,
          "external scorer '" + name + "' failed: " + command);

  std::map<std::string, double> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    std::string key = name;
    std::string val = tok;
    if (eq != std::string::npos) {
      key = name + "." + tok.substr(0, eq);
      val = tok.substr(eq + 1);
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(val, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == val.size() && !val.empty(), ErrorCode::kFormat,
            "external scorer '" + name + "': cannot parse '" + tok + "'");
    out[key] = v;
  }
  require(!out.empty(), ErrorCode::kFormat,
          "external scorer '" + name + "' printed no score");
  return out;
}

std::vector<std::string> MetricReport::metric_names() const {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& u : utterances)
    for (const auto& [k, _] : u.scores)
      if (seen.insert(k).second) names.push_back(k);
  return names;
}

std::map<double, std::map<std::string, double>> MetricReport::bucket_means()
    const {
  std::map<double, std::map<std::string, double>> sums;
  std::map<double, std::map<std::string, std::size_t>> counts;
  for (const auto& u : utterances)
    for (const auto& [k, v] : u.scores) {
      sums[u.snr_db][k] += v;
      ++counts[u.snr_db][k];
    }
  for (auto& [snr, row] : sums)
    for (auto& [k, v] : row) v /= static_cast<double>(counts[snr][k]);
  return sums;
}

std::map<std::string, double> MetricReport::overall_means() const {
  std::map<std::string, double> sums;
  std::map<std::string, std::size_t> counts;
  for (const auto& u : utterances)
    for (const auto& [k, v] : u.scores) {
      sums[k] += v;
      ++counts[k];
    }
  for (auto& [k, v] : sums) v /= static_cast<double>(counts[k]);
  return sums;
}

std::string MetricReport::table() const {
  const auto names = metric_names();
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(10) << "snr_db" << std::right << std::setw(6)
     << "n";
  for (const auto& n : names)
    os << std::setw(std::max<int>(12, static_cast<int>(n.size()) + 2)) << n;
  os << "\n";
  auto row = [&](const std::string& label, std::size_t count,
                 const std::map<std::string, double>& vals) {
    os << std::left << std::setw(10) << label << std::right << std::setw(6)
       << count;
    for (const auto& n : names) {
      const int w = std::max<int>(12, static_cast<int>(n.size()) + 2);
      auto it = vals.find(n);
      if (it == vals.end())
        os << std::setw(w) << "-";
      else
        os << std::setw(w) << it->second;
    }
    os << "\n";
  };
  std::map<double, std::size_t> counts;
  for (const auto& u : utterances) ++counts[u.snr_db];
  for (const auto& [snr, vals] : bucket_means()) {
    std::ostringstream label;
    label << std::fixed << std::setprecision(1) << snr;
    row(label.str(), counts[snr], vals);
  }
  row("avg", utterances.size(), overall_means());
  return os.str();
}

void MetricReport::save_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo,
          "cannot write " + path.string());
  for (const auto& u : utterances) {
    nlohmann::json j = {{"id", u.id}, {"snr_db", u.snr_db}};
    for (const auto& [k, v] : u.scores) j[k] = v;
    out << j.dump() << "\n";
  }
}

MetricReport evaluate_corpus(const DbtModel& model,
                             const std::vector<NoisyPair>& pairs,
                             const std::vector<std::string>& metrics,
                             const StftConfig& stft_cfg,
                             const std::vector<ExternalScorer>& external) {
  using Fn = double (*)(const Waveform&, const Waveform&);
  std::vector<std::pair<std::string, Fn>> fns;
  for (const auto& m : metrics) {
    if (m == "sdr")
      fns.emplace_back(m, [](const Waveform& e, const Waveform& r) {
        return sdr(e, r);
      });
    else if (m == "si_sdr")
      fns.emplace_back(m, [](const Waveform& e, const Waveform& r) {
        return si_sdr(e, r);
      });
    else if (m == "segsnr")
      fns.emplace_back(m, [](const Waveform& e, const Waveform& r) {
        return segsnr(e, r);
      });
    else
      fail(ErrorCode::kInvalidArgument,
           "unknown metric '" + m + "' (expected sdr, si_sdr or segsnr)");
  }
  MetricReport report;
  for (const auto& p : pairs) {
    const Waveform enh = enhance(model, p.noisy, stft_cfg);
    UtteranceScore u{p.id, p.snr_db, {}};
    for (const auto& [name, fn] : fns) {
      const double e = fn(enh, p.clean);
      const double n = fn(p.noisy, p.clean);
      u.scores[name] = e;
      u.scores[name + "_noisy"] = n;
      u.scores["d_" + name] = e - n;
    }
    for (const auto& ext : external)
      for (const auto& [k, v] : ext.score(enh, p.clean)) u.scores[k] = v;
    report.utterances.push_back(std::move(u));
  }
  return report;
}

}  // namespace dbt
