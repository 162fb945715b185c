// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dbt/checkpoint.hpp"
#include "dbt/error.hpp"
#include "dbt/metrics.hpp"
#include "dbt/ops.hpp"
#include "dbt/wav.hpp"

namespace dbt {

using nlohmann::json;

LossReport LossTerms::report(double mu) const {
  return {l_ri.value()[0], l_mag.value()[0], l_full.value()[0], mu};
}

LossTerms loss_full(const Var& est_real, const Var& est_imag,
                    const Tensor& target_real, const Tensor& target_imag,
                    double mu) {
  require(same_shape(est_real.value(), target_real) &&
              same_shape(est_imag.value(), target_imag) &&
              same_shape(target_real, target_imag),
          ErrorCode::kShapeMismatch,
          "loss_full: estimate " + shape_str(est_real.shape()) +
              " and target " + shape_str(target_real.shape()) + " differ");
  require(mu >= 0.0 && mu <= 1.0, ErrorCode::kInvalidArgument,
          "loss_full: mu must lie in [0, 1]");
  const Var tr(target_real), ti(target_imag);
  Tensor target_mag(target_real.shape());
  for (std::size_t i = 0; i < target_mag.numel(); ++i)
    target_mag[i] = std::hypot(target_real[i], target_imag[i]);

  LossTerms t;
  t.l_ri = ops::add(ops::mse(est_real, tr), ops::mse(est_imag, ti));
  t.l_mag = ops::mse(ops::magnitude(est_real, est_imag), Var(target_mag));
  t.l_full = ops::add(ops::scale(t.l_ri, mu), ops::scale(t.l_mag, 1.0 - mu));
  return t;
}

// --- manifests ----------------------------------------------------------------

void PairManifest::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& p : pairs) {
    json j = {{"id", p.id},         {"clean", p.clean},
              {"noise", p.noise},   {"snr_db", p.snr_db},
              {"noise_offset", p.noise_offset},
              {"seed", p.seed},     {"split", p.split}};
    out << j.dump() << "\n";
  }
}

PairManifest PairManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open manifest " + path.string());
  PairManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      PairRecord r;
      r.id = j.at("id").get<std::string>();
      r.clean = j.at("clean").get<std::string>();
      r.noise = j.at("noise").get<std::string>();
      r.snr_db = j.at("snr_db").get<double>();
      r.noise_offset = j.at("noise_offset").get<std::size_t>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.split = j.value("split", std::string("train"));
      for (const auto& [k, _] : j.items())
        require(k == "id" || k == "clean" || k == "noise" || k == "snr_db" ||
                    k == "noise_offset" || k == "seed" || k == "split",
                ErrorCode::kFormat, where + ": unknown field '" + k + "'");
      m.pairs.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorCode::kFormat, where + ": " + e.what());
    }
  }
  return m;
}

PairManifest PairManifest::split(const std::string& name) const {
  PairManifest out;
  for (const auto& p : pairs)
    if (p.split == name) out.pairs.push_back(p);
  return out;
}

std::vector<double> snr_grid(double snr_min, double snr_max) {
  require(snr_min <= snr_max, ErrorCode::kInvalidArgument,
          "snr_grid: min exceeds max");
  std::vector<double> g;
  for (double s = snr_min; s <= snr_max + 1e-9; s += 1.0) g.push_back(s);
  return g;
}

PairManifest build_pairs(const std::vector<std::filesystem::path>& clean,
                         const std::vector<std::filesystem::path>& noise,
                         const std::vector<double>& snrs, std::size_t count,
                         std::uint64_t seed, double valid_fraction) {
  require(!clean.empty() && !noise.empty() && !snrs.empty(),
          ErrorCode::kInvalidArgument,
          "build_pairs: clean, noise and SNR lists must be non-empty");
  require(valid_fraction >= 0.0 && valid_fraction <= 1.0,
          ErrorCode::kInvalidArgument, "build_pairs: valid_fraction outside [0, 1]");
  std::vector<std::size_t> clean_len, noise_len;
  for (const auto& p : clean) clean_len.push_back(read_wav(p).size());
  for (const auto& p : noise) noise_len.push_back(read_wav(p).size());

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_c(0, clean.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_n(0, noise.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_s(0, snrs.size() - 1);
  const auto n_valid =
      static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(count)));
  PairManifest m;
  for (std::size_t i = 0; i < count; ++i) {
    PairRecord r;
    const std::size_t c = pick_c(rng), n = pick_n(rng), s = pick_s(rng);
    r.seed = rng();
    std::ostringstream id;
    id << "pair" << std::setfill('0') << std::setw(5) << i;
    r.id = id.str();
    r.clean = clean[c].string();
    r.noise = noise[n].string();
    r.snr_db = snrs[s];
    r.noise_offset = noise_cut_offset(clean_len[c], noise_len[n], r.seed);
    r.split = i + n_valid >= count ? "valid" : "train";
    m.pairs.push_back(std::move(r));
  }
  return m;
}

NoisyPair realize(const PairRecord& rec, const std::filesystem::path& base) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
  };
  NoisyPair out;
  out.id = rec.id;
  out.snr_db = rec.snr_db;
  out.clean = read_wav(resolve(rec.clean));
  const Waveform noise = read_wav(resolve(rec.noise), out.clean.sample_rate);
  out.noisy = mix_at_offset(out.clean, noise, rec.snr_db, rec.noise_offset).noisy;
  return out;
}

// --- Adam ---------------------------------------------------------------------

Adam::Adam(const AdamConfig& cfg, const std::vector<Var>& params) : cfg_(cfg) {
  for (const auto& p : params) {
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

double Adam::step(const std::vector<Var>& params) {
  require(params.size() == m_.size(), ErrorCode::kInvalidArgument,
          "adam: parameter list does not match optimizer state");
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad().values()) sq += g * g;
  const double norm = std::sqrt(sq);
  double clip = 1.0;
  if (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) clip = cfg_.grad_clip / norm;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Var p = params[k];
    const Tensor& g = p.grad();
    if (g.empty()) continue;
    double* w = p.mutable_value().data();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double gi = g[i] * clip;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      w[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
  return norm;
}

// --- data -----------------------------------------------------------------------

Example make_example(const std::string& id, const Waveform& clean,
                     const Waveform& noisy, const StftConfig& stft_cfg,
                     double compression) {
  require(clean.size() == noisy.size(), ErrorCode::kShapeMismatch,
          "example " + id + ": clean and noisy lengths differ");
  Example ex;
  ex.id = id;
  ex.clean = clean;
  ex.noisy = noisy;
  const Spectrogram n = compress(stft(noisy, stft_cfg), compression);
  const Spectrogram c = compress(stft(clean, stft_cfg), compression);
  ex.noisy_real = n.real;
  ex.noisy_imag = n.imag;
  ex.clean_real = c.real;
  ex.clean_imag = c.imag;
  return ex;
}

std::vector<Example> make_examples(const std::vector<NoisyPair>& pairs,
                                   double chunk_seconds,
                                   const StftConfig& stft_cfg,
                                   double compression) {
  std::vector<Example> out;
  for (const auto& p : pairs) {
    const auto cc = chunk(p.clean, chunk_seconds);
    const auto nc = chunk(p.noisy, chunk_seconds);
    for (std::size_t k = 0; k < cc.size(); ++k) {
      if (cc[k].energy() == 0.0) continue;
      out.push_back(make_example(p.id + "#" + std::to_string(k), cc[k], nc[k],
                                 stft_cfg, compression));
    }
  }
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

void stack_batch(const std::vector<const Example*>& batch, Tensor& noisy_real,
                 Tensor& noisy_imag, Tensor& clean_real, Tensor& clean_imag) {
  require(!batch.empty(), ErrorCode::kInvalidArgument, "stack_batch: empty batch");
  const Shape& s = batch.front()->noisy_real.shape();
  const std::size_t area = shape_numel(s);
  const Shape out{batch.size(), 1, s[0], s[1]};
  noisy_real = Tensor(out);
  noisy_imag = Tensor(out);
  clean_real = Tensor(out);
  clean_imag = Tensor(out);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Example& e = *batch[b];
    require(e.noisy_real.shape() == s, ErrorCode::kShapeMismatch,
            "stack_batch: example " + e.id + " has a different length");
    std::copy_n(e.noisy_real.data(), area, noisy_real.data() + b * area);
    std::copy_n(e.noisy_imag.data(), area, noisy_imag.data() + b * area);
    std::copy_n(e.clean_real.data(), area, clean_real.data() + b * area);
    std::copy_n(e.clean_imag.data(), area, clean_imag.data() + b * area);
  }
}

LogEntry train_step(DbtModel& model, TrainState& state,
                    const std::vector<const Example*>& batch) {
  Tensor nr, ni, cr, ci;
  stack_batch(batch, nr, ni, cr, ci);
  const std::vector<Var> params = model.params().vars();
  if (state.adam.first_moment().size() != params.size())
    state.adam = Adam(state.adam.config(), params);
  model.params().zero_grad();
  const EnhancementOutput out = model.forward(nr, ni);
  const LossTerms terms =
      loss_full(out.final_real, out.final_imag, cr, ci, model.config().mu);
  LogEntry e;
  e.loss = terms.report(model.config().mu);
  e.epoch = state.epoch;
  if (!std::isfinite(e.loss.l_full)) {
    e.step = state.step;
    return e;
  }
  backward(terms.l_full);
  e.grad_norm = state.adam.step(params);
  ++state.step;
  e.step = state.step;
  return e;
}

LossReport evaluate_loss(const DbtModel& model,
                         const std::vector<Example>& examples) {
  NoGradGuard guard;
  LossReport sum{0.0, 0.0, 0.0, model.config().mu};
  for (const auto& ex : examples) {
    Tensor nr, ni, cr, ci;
    stack_batch({&ex}, nr, ni, cr, ci);
    const EnhancementOutput out = model.forward(nr, ni);
    const LossReport r = loss_full(out.final_real, out.final_imag, cr, ci,
                                   model.config().mu)
                             .report(model.config().mu);
    sum.l_ri += r.l_ri;
    sum.l_mag += r.l_mag;
    sum.l_full += r.l_full;
  }
  if (!examples.empty()) {
    const double n = static_cast<double>(examples.size());
    sum.l_ri /= n;
    sum.l_mag /= n;
    sum.l_full /= n;
  }
  return sum;
}

namespace {

void dump_nan(const TrainPaths& paths, const TrainState& state,
              const std::vector<const Example*>& batch, const LogEntry& e) {
  json j = {{"step", state.step},
            {"epoch", state.epoch},
            {"batch_in_epoch", state.batch_in_epoch},
            {"l_ri", e.loss.l_ri},
            {"l_mag", e.loss.l_mag},
            {"l_full", e.loss.l_full}};
  json items = json::array();
  for (const Example* ex : batch) {
    double peak = 0.0;
    bool finite = true;
    for (double v : ex->noisy.samples) {
      finite = finite && std::isfinite(v);
      peak = std::max(peak, std::abs(v));
    }
    items.push_back({{"id", ex->id},
                     {"noisy_peak", peak},
                     {"noisy_finite", finite},
                     {"clean_energy", ex->clean.energy()}});
  }
  j["batch"] = items;
  std::filesystem::path where = paths.log.empty()
                                    ? std::filesystem::path("nan_dump.json")
                                    : std::filesystem::path(paths.log.string() + ".nan.json");
  std::ofstream out(where);
  if (out) out << j.dump(2) << "\n";
}

}  // namespace

void train(DbtModel& model, TrainState& state,
           const std::vector<Example>& train_set,
           const std::vector<Example>& valid_set, const TrainOptions& opts,
           const TrainPaths& paths, const TrainHooks& hooks) {
  require(!train_set.empty(), ErrorCode::kInvalidArgument, "train: empty training set");
  require(opts.batch >= 1, ErrorCode::kInvalidArgument, "train: batch must be >= 1");
  if (state.adam.first_moment().empty())
    state.adam = Adam(opts.adam, model.params().vars());

  std::ofstream log;
  if (!paths.log.empty()) {
    if (paths.log.has_parent_path())
      std::filesystem::create_directories(paths.log.parent_path());
    log.open(paths.log, std::ios::app);
    require(static_cast<bool>(log), ErrorCode::kIo, "cannot open log " + paths.log.string());
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto save = [&](const std::string& name) {
    if (!paths.checkpoint.empty())
      save_checkpoint(paths.checkpoint / name, model, state.seed, &state);
  };
  auto validate = [&] {
    if (valid_set.empty()) return;
    const double v = evaluate_loss(model, valid_set).l_full;
    if (log) log << json{{"step", state.step}, {"valid_l_full", v}, {"wall", wall()}}.dump() << std::endl;
    if (hooks.on_validate) hooks.on_validate(state.step, v);
    if (!state.has_best || v < state.best_valid) {
      state.best_valid = v;
      state.has_best = true;
      save("best.ckpt");
    }
  };

  const std::size_t n = train_set.size();
  const std::size_t per_epoch = std::max<std::size_t>(1, n / opts.batch);
  const std::size_t bsize = std::min(opts.batch, n);
  bool stop = false;
  while (!stop && state.epoch < opts.epochs) {
    const auto order = epoch_order(n, state.seed, state.epoch);
    while (state.batch_in_epoch < per_epoch) {
      std::vector<const Example*> batch;
      for (std::size_t k = 0; k < bsize; ++k)
        batch.push_back(&train_set[order[state.batch_in_epoch * bsize + k]]);
      LogEntry e = train_step(model, state, batch);
      if (!std::isfinite(e.loss.l_full)) {
        dump_nan(paths, state, batch, e);
        fail(ErrorCode::kNumeric, "train: non-finite loss at step " +
                                      std::to_string(state.step + 1) +
                                      " (epoch " + std::to_string(state.epoch) + ")");
      }
      ++state.batch_in_epoch;
      e.wall_seconds = wall();
      if (log && (opts.log_every <= 1 || state.step % opts.log_every == 0))
        log << json{{"step", e.step},        {"epoch", e.epoch},
                    {"l_ri", e.loss.l_ri},   {"l_mag", e.loss.l_mag},
                    {"l_full", e.loss.l_full}, {"grad_norm", e.grad_norm},
                    {"wall", e.wall_seconds}}
                   .dump()
            << std::endl;
      if (hooks.on_step && !hooks.on_step(e)) stop = true;
      if (opts.validate_every > 0 && state.step % opts.validate_every == 0) validate();
      if (opts.checkpoint_every > 0 && state.step % opts.checkpoint_every == 0)
        save("last.ckpt");
      if (opts.max_steps > 0 && state.step >= opts.max_steps) stop = true;
      if (opts.max_seconds > 0.0 && wall() >= opts.max_seconds) stop = true;
      if (stop) break;
    }
    if (state.batch_in_epoch >= per_epoch) {
      ++state.epoch;
      state.batch_in_epoch = 0;
      if (opts.validate_every == 0) validate();
      if (opts.checkpoint_every == 0) save("last.ckpt");
    }
  }
  save("last.ckpt");
}

// --- enhancement / overfit ---------------------------------------------------------

Waveform enhance(const DbtModel& model, const Waveform& noisy,
                 const StftConfig& stft_cfg) {
  // A silent input carries nothing to enhance; trained biases would
  // otherwise synthesize a faint residual out of nothing.
  if (std::all_of(noisy.samples.begin(), noisy.samples.end(),
                  [](double v) { return v == 0.0; }))
    return noisy;
  NoGradGuard guard;
  const double c = model.config().compression;
  const Spectrogram spec = compress(stft(noisy, stft_cfg), c);
  const EnhancementOutput out = model.forward(spec);
  Spectrogram est;
  est.compressed = true;
  est.exponent = c;
  est.real = out.final_real.value().reshaped(spec.real.shape());
  est.imag = out.final_imag.value().reshaped(spec.imag.shape());
  return istft(decompress(est), stft_cfg, noisy.size());
}

OverfitReport overfit_single(DbtModel& model, const NoisyPair& pair,
                             const OverfitOptions& opts,
                             const StftConfig& stft_cfg) {
  const Example ex = make_example(pair.id, pair.clean, pair.noisy, stft_cfg,
                                  model.config().compression);
  TrainState state;
  state.seed = opts.seed;
  state.adam = Adam(opts.adam, model.params().vars());
  OverfitReport rep;
  const std::vector<const Example*> batch{&ex};
  for (std::size_t s = 0; s < opts.max_steps; ++s) {
    const LogEntry e = train_step(model, state, batch);
    require(std::isfinite(e.loss.l_full), ErrorCode::kNumeric,
            "overfit: non-finite loss at step " + std::to_string(s + 1));
    rep.losses.push_back(e.loss.l_full);
    rep.steps = s + 1;
    if (opts.check_every > 0 && rep.steps % opts.check_every == 0 &&
        e.loss.l_full <= opts.target_loss_ratio * rep.losses.front() &&
        si_sdr(enhance(model, pair.noisy, stft_cfg), pair.clean) >= opts.target_si_sdr)
      break;
  }
  rep.initial_loss = rep.losses.empty() ? 0.0 : rep.losses.front();
  rep.final_loss = evaluate_loss(model, {ex}).l_full;
  rep.si_sdr = si_sdr(enhance(model, pair.noisy, stft_cfg), pair.clean);
  return rep;
}

}  // namespace dbt
