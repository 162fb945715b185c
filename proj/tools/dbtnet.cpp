// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// dbtnet: train, enhance, evaluate and audit dual-branch enhancement models.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "dbt/checkpoint.hpp"
#include "dbt/config.hpp"
#include "dbt/error.hpp"
#include "dbt/metrics.hpp"
#include "dbt/model.hpp"
#include "dbt/plot.hpp"
#include "dbt/synth.hpp"
#include "dbt/training.hpp"
#include "dbt/wav.hpp"

namespace fs = std::filesystem;
using namespace dbt;

namespace {

// Realizes records in parallel; slot i always holds record i, so the
// result does not depend on the worker count.
std::vector<NoisyPair> realize_all(const PairManifest& m, const fs::path& base,
                                   std::size_t workers) {
  std::vector<NoisyPair> out(m.pairs.size());
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < m.pairs.size(); i += workers)
          out[i] = realize(m.pairs[i], base);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

fs::path manifest_base(const fs::path& manifest, const fs::path& audio_root) {
  return audio_root.empty() ? manifest.parent_path() : audio_root;
}

std::vector<fs::path> wav_files(const fs::path& p) {
  require(fs::exists(p), ErrorCode::kIo, "no such file or directory: " + p.string());
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorCode::kIo, "no .wav files in " + p.string());
  return files;
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::showpos << std::fixed << std::setprecision(1) << 100.0 * v << "%";
  return os.str();
}

// --- subcommands -------------------------------------------------------------

struct Globals {
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
};

int cmd_init_config(const std::string& preset_name, const fs::path& out,
                    const Globals& g) {
  RunConfig c;
  c.model = preset(preset_name);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  if (out.empty())
    std::cout << to_json(c);
  else
    save_run_config(out, c);
  return 0;
}

int cmd_synth(const fs::path& out, SynthCorpusOptions o, const Globals& g) {
  if (g.seed) o.seed = *g.seed;
  const fs::path manifest = write_synth_corpus(out, o);
  std::cout << "manifest " << manifest.string() << "\n";
  return 0;
}

int cmd_make_pairs(const fs::path& clean_dir, const fs::path& noise_dir,
                   std::size_t count, double snr_min, double snr_max,
                   double valid_fraction, const fs::path& out, const Globals& g) {
  const auto m = build_pairs(wav_files(clean_dir), wav_files(noise_dir),
                             snr_grid(snr_min, snr_max), count,
                             g.seed.value_or(0), valid_fraction);
  m.save(out);
  std::cout << "wrote " << m.pairs.size() << " pairs to " << out.string() << "\n";
  return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& resume,
              std::size_t max_steps, const Globals& g) {
  RunConfig cfg = load_run_config(config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = g.workers;
  if (max_steps) cfg.train.max_steps = max_steps;
  require(!cfg.data.train_manifest.empty(), ErrorCode::kConfig,
          "data.train_manifest is required for training");

  auto load_split = [&](const fs::path& manifest, const std::string& split) {
    PairManifest m = PairManifest::load(manifest);
    if (!split.empty()) m = m.split(split);
    const auto pairs = realize_all(m, manifest_base(manifest, cfg.data.audio_root),
                                   cfg.workers);
    return make_examples(pairs, cfg.train.chunk_seconds, cfg.stft,
                         cfg.model.compression);
  };
  // A single manifest is split by its "split" field; a separate validation
  // manifest is used whole.
  const bool separate = !cfg.data.valid_manifest.empty();
  const auto train_set = load_split(cfg.data.train_manifest, separate ? "" : "train");
  const auto valid_set = separate ? load_split(cfg.data.valid_manifest, "")
                                  : load_split(cfg.data.train_manifest, "valid");

  std::unique_ptr<DbtModel> model;
  TrainState state;
  if (!resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(resume);
    require(ck.config == cfg.model, ErrorCode::kConfig,
            "checkpoint model configuration differs from " + config_path.string());
    require(ck.state.has_value(), ErrorCode::kFormat,
            resume.string() + " holds no training state");
    model = std::move(ck.model);
    state = std::move(*ck.state);
  } else {
    model = std::make_unique<DbtModel>(cfg.model, cfg.seed);
    state.seed = cfg.seed;
    state.adam = Adam(cfg.train.adam, model->params().vars());
  }
  fs::create_directories(cfg.output_dir);
  save_run_config(cfg.output_dir / "config.json", cfg);
  std::cout << "training " << variant_name(cfg.model.variant) << ": "
            << count_params(*model) << " parameters, " << train_set.size()
            << " training chunks, " << valid_set.size() << " validation chunks\n";
  TrainHooks hooks;
  hooks.on_validate = [](std::uint64_t step, double v) {
    std::cout << "step " << step << " valid_l_full " << v << "\n" << std::flush;
  };
  train(*model, state, train_set, valid_set, cfg.train,
        {cfg.output_dir / "train_log.jsonl", cfg.output_dir}, hooks);
  std::cout << "finished at step " << state.step << "; checkpoints in "
            << cfg.output_dir.string() << "\n";
  return 0;
}

int cmd_enhance(const fs::path& checkpoint, const fs::path& input,
                const fs::path& out_dir) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const StftConfig stft_cfg;
  fs::create_directories(out_dir);
  for (const auto& f : wav_files(input)) {
    const Waveform w = read_wav(f, stft_cfg.sample_rate);
    const Waveform e = enhance(*ck.model, w, stft_cfg);
    const fs::path dst = out_dir / f.filename();
    write_wav(dst, e, WavFormat::kFloat32);
    std::cout << f.string() << " -> " << dst.string() << "\n";
  }
  return 0;
}

int cmd_evaluate(const fs::path& checkpoint, const fs::path& manifest,
                 const std::string& split, const std::vector<std::string>& metrics,
                 const std::vector<std::string>& scorers, const fs::path& audio_root,
                 const fs::path& report, const Globals& g) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  PairManifest m = PairManifest::load(manifest);
  if (!split.empty()) m = m.split(split);
  require(!m.pairs.empty(), ErrorCode::kInvalidArgument,
          "no pairs to evaluate in " + manifest.string());
  std::vector<ExternalScorer> ext;
  for (const auto& s : scorers) {
    const auto eq = s.find('=');
    require(eq != std::string::npos && eq > 0, ErrorCode::kInvalidArgument,
            "scorer must be NAME=COMMAND, got '" + s + "'");
    ext.push_back({s.substr(0, eq), s.substr(eq + 1)});
  }
  const auto pairs = realize_all(m, manifest_base(manifest, audio_root),
                                 std::max<std::size_t>(1, g.workers));
  const MetricReport r = evaluate_corpus(*ck.model, pairs, metrics, {}, ext);
  std::cout << r.table();
  if (!report.empty()) r.save_jsonl(report);
  return 0;
}

struct AuditLine {
  std::string name;
  double params_m, macs_g;
  std::optional<double> reference_params, reference_macs;
  bool pass = true;
};

AuditLine audit_one(const std::string& name, const ModelConfig& c,
                    const AuditTolerance& tol, std::optional<double> pp,
                    std::optional<double> pm) {
  DbtModel m(c, 0);
  AuditLine a{name, count_params(m) / 1e6, count_macs(c, tol.seconds) / 1e9, pp, pm};
  if (pp) a.pass = a.pass && std::abs(a.params_m / *pp - 1.0) <= tol.params;
  if (pm) a.pass = a.pass && std::abs(a.macs_g / (*pm * tol.seconds) - 1.0) <= tol.macs;
  return a;
}

void print_audit(const std::vector<AuditLine>& lines, const AuditTolerance& tol) {
  std::cout << std::left << std::setw(12) << "model" << std::right << std::setw(10)
            << "params_M" << std::setw(10) << "ref_M" << std::setw(9) << "dev"
            << std::setw(10) << "MACs_G" << std::setw(10) << "ref_G" << std::setw(9)
            << "dev" << "  verdict\n";
  std::cout << std::fixed;
  for (const auto& a : lines) {
    std::cout << std::left << std::setw(12) << a.name << std::right << std::setprecision(3)
              << std::setw(10) << a.params_m;
    if (a.reference_params)
      std::cout << std::setw(10) << *a.reference_params << std::setw(9)
                << pct(a.params_m / *a.reference_params - 1.0);
    else
      std::cout << std::setw(10) << "-" << std::setw(9) << "-";
    std::cout << std::setprecision(2) << std::setw(10) << a.macs_g;
    if (a.reference_macs)
      std::cout << std::setw(10) << *a.reference_macs * tol.seconds << std::setw(9)
                << pct(a.macs_g / (*a.reference_macs * tol.seconds) - 1.0);
    else
      std::cout << std::setw(10) << "-" << std::setw(9) << "-";
    std::cout << "  "
              << (a.reference_params || a.reference_macs ? (a.pass ? "pass" : "FAIL") : "n/a")
              << "\n";
  }
  std::cout << "tolerances: params " << pct(tol.params) << ", MACs " << pct(tol.macs)
            << " (MACs for " << tol.seconds << " s of audio)\n";
}

int cmd_audit(const fs::path& config_path) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = load_run_config(config_path);
  std::optional<double> pp, pm;
  std::string name = variant_name(cfg.model.variant);
  for (const auto& row : ablation_rows())
    if (row.config == cfg.model) {
      pp = row.reference_params_m;
      pm = row.reference_macs_g;
      name = row.name;
      break;
    }
  const AuditLine a = audit_one(name, cfg.model, cfg.audit, pp, pm);
  print_audit({a}, cfg.audit);
  return a.pass ? 0 : 1;
}

int cmd_ablate(const fs::path& config_path, const std::vector<std::string>& rows,
               std::size_t probe_steps, const Globals& g) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = load_run_config(config_path);
  std::vector<AuditLine> lines;
  std::vector<std::pair<std::string, double>> probes;
  bool all_pass = true;
  std::vector<NoisyPair> probe_pairs;
  if (probe_steps > 0) {
    SynthCorpusOptions o;
    o.minutes = 0.5;
    o.utterance_seconds = 1.0;
    o.valid_fraction = 0.0;
    o.seed = g.seed.value_or(cfg.seed);
    probe_pairs = synth_pairs(o, "train");
  }
  for (const auto& row : ablation_rows()) {
    if (!rows.empty() && std::find(rows.begin(), rows.end(), row.name) == rows.end())
      continue;
    lines.push_back(audit_one(row.name, row.config, cfg.audit, row.reference_params_m,
                              row.reference_macs_g));
    all_pass = all_pass && lines.back().pass;
    if (probe_steps > 0) {
      DbtModel m(row.config, g.seed.value_or(cfg.seed));
      const auto ex = make_examples(probe_pairs, 1.0, cfg.stft, row.config.compression);
      TrainState st;
      st.seed = g.seed.value_or(cfg.seed);
      TrainOptions opts = cfg.train;
      opts.max_steps = probe_steps;
      opts.epochs = probe_steps;
      train(m, st, ex, {}, opts);
      probes.emplace_back(row.name, evaluate_loss(m, ex).l_full);
    }
  }
  require(!lines.empty(), ErrorCode::kInvalidArgument, "no matching ablation rows");
  print_audit(lines, cfg.audit);
  if (!probes.empty()) {
    std::cout << "\nshort training probe (" << probe_steps << " steps)\n";
    for (const auto& [n, l] : probes)
      std::cout << std::left << std::setw(12) << n << " l_full " << std::setprecision(4)
                << l << "\n";
  }
  return all_pass ? 0 : 1;
}

int cmd_plot(const std::vector<fs::path>& inputs, const fs::path& out) {
  std::vector<Waveform> panels;
  for (const auto& p : inputs) panels.push_back(read_wav(p));
  write_png(out, render_spectrograms(panels));
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dbtnet: dual-branch speech enhancement"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random choice");
  app.add_option("--workers", g.workers, "Data-preparation threads")
      ->check(CLI::PositiveNumber);

  std::string preset_name = "dbt";
  fs::path out_path, config_path, resume, checkpoint, input, manifest, audio_root,
      report, clean_dir, noise_dir;
  std::size_t max_steps = 0, count = 0, probe_steps = 0;
  double snr_min = -5.0, snr_max = 0.0, valid_fraction = 0.0;
  std::string split;
  std::vector<std::string> metrics = kDefaultMetrics, scorers, rows;
  std::vector<fs::path> plot_inputs;
  SynthCorpusOptions synth;

  auto* init = app.add_subcommand("init-config", "Write a default run configuration");
  init->add_option("--preset", preset_name, "Model preset");
  init->add_option("--out", out_path, "Output file (stdout when omitted)");

  auto* sc = app.add_subcommand("synth-corpus", "Generate a synthetic corpus");
  sc->add_option("--out", out_path, "Output directory")->required();
  sc->add_option("--minutes", synth.minutes, "Minutes of clean speech");
  sc->add_option("--utterance-seconds", synth.utterance_seconds);
  sc->add_option("--noise-files", synth.noise_files);
  sc->add_option("--valid-fraction", synth.valid_fraction);

  auto* mp = app.add_subcommand("make-pairs", "Build a pair manifest from WAV folders");
  mp->add_option("--clean", clean_dir)->required();
  mp->add_option("--noise", noise_dir)->required();
  mp->add_option("--count", count)->required();
  mp->add_option("--snr-min", snr_min);
  mp->add_option("--snr-max", snr_max);
  mp->add_option("--valid-fraction", valid_fraction);
  mp->add_option("--out", out_path)->required();

  auto* tr = app.add_subcommand("train", "Train from a run configuration");
  tr->add_option("--config", config_path)->required();
  tr->add_option("--resume", resume, "Checkpoint to resume from");
  tr->add_option("--max-steps", max_steps, "Stop after this many total steps");

  auto* en = app.add_subcommand("enhance", "Enhance a WAV file or folder");
  en->add_option("--checkpoint", checkpoint)->required();
  en->add_option("--input", input)->required();
  en->add_option("--out", out_path)->required();

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a manifest");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--manifest", manifest)->required();
  ev->add_option("--split", split, "Only records with this split");
  ev->add_option("--metrics", metrics)->delimiter(',');
  ev->add_option("--scorer", scorers, "External scorer NAME=COMMAND");
  ev->add_option("--audio-root", audio_root);
  ev->add_option("--report", report, "Per-utterance JSONL output");

  auto* ab = app.add_subcommand("ablate", "Audit the ablation grid");
  ab->add_option("--config", config_path);
  ab->add_option("--rows", rows, "Subset of rows")->delimiter(',');
  ab->add_option("--probe-steps", probe_steps, "Short training probe per row");

  auto* au = app.add_subcommand("audit", "Parameter and MAC audit of a configuration");
  au->add_option("--config", config_path);

  auto* pl = app.add_subcommand("plot", "Render spectrograms side by side to PNG");
  pl->add_option("--input", plot_inputs)->required();
  pl->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "dbtnet-error: usage: " << e.what() << "\n";
    return 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*init) return cmd_init_config(preset_name, out_path, g);
    if (*sc) return cmd_synth(out_path, synth, g);
    if (*mp)
      return cmd_make_pairs(clean_dir, noise_dir, count, snr_min, snr_max,
                            valid_fraction, out_path, g);
    if (*tr) return cmd_train(config_path, resume, max_steps, g);
    if (*en) return cmd_enhance(checkpoint, input, out_path);
    if (*ev)
      return cmd_evaluate(checkpoint, manifest, split, metrics, scorers, audio_root,
                          report, g);
    if (*ab) return cmd_ablate(config_path, rows, probe_steps, g);
    if (*au) return cmd_audit(config_path);
    if (*pl) return cmd_plot(plot_inputs, out_path);
  } catch (const Error& e) {
    std::cerr << "dbtnet-error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dbtnet-error: internal: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
