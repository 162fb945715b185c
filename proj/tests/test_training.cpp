// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "doctest.h"
#include "dbt/checkpoint.hpp"
#include "dbt/error.hpp"
#include "dbt/gradcheck.hpp"
#include "dbt/metrics.hpp"
#include "dbt/synth.hpp"
#include "dbt/training.hpp"
#include "dbt/wav.hpp"
#include "test_util.hpp"

using namespace dbt;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dbtnet_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

StftConfig small_stft() {
  StftConfig s;
  s.fft_size = 32;
  s.win_length = 32;
  s.hop = 16;
  return s;
}

ModelConfig small_model() {
  ModelConfig c = preset("micro");
  c.bins = 17;
  return c;
}

// A handful of short examples on a 17-bin STFT.
std::vector<Example> small_examples(std::size_t n, std::uint64_t seed) {
  std::vector<Example> out;
  for (std::size_t k = 0; k < n; ++k) {
    const Waveform clean = synth_speech(0.06, seed + k);
    Waveform noise = synth_noise(0.06, seed + 100 + k);
    Waveform noisy = clean;
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy.samples[i] += noise.samples[i];
    out.push_back(make_example("ex" + std::to_string(k), clean, noisy,
                               small_stft(), 0.5));
  }
  return out;
}

double max_param_diff(const DbtModel& a, const DbtModel& b) {
  double d = 0.0;
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  for (std::size_t k = 0; k < ea.size(); ++k)
    d = std::max(d, max_abs_diff(ea[k].second.value(), eb[k].second.value()));
  return d;
}

}  // namespace

TEST_CASE("hybrid loss on a hand-computed 2x2 grid") {
  // est = 1, 0, 3i, 0; target = 0, 0, 4, 2i.
  const Var er(Tensor({2, 2}, {1, 0, 0, 0})), ei(Tensor({2, 2}, {0, 0, 3, 0}));
  const Tensor tr({2, 2}, {0, 0, 4, 0}), ti({2, 2}, {0, 0, 0, 2});
  const auto t = loss_full(er, ei, tr, ti, 0.5);
  // real errors 1, -4 -> 17/4; imag errors 3, -2 -> 13/4.
  CHECK(t.l_ri.value()[0] == doctest::Approx(7.5));
  // magnitudes 1,0,3,0 vs 0,0,4,2 -> (1 + 1 + 4) / 4.
  CHECK(t.l_mag.value()[0] == doctest::Approx(1.5));
  CHECK(t.l_full.value()[0] == doctest::Approx(4.5));
  const auto r = t.report(0.5);
  CHECK(r.l_full == r.mu * r.l_ri + (1.0 - r.mu) * r.l_mag);
  CHECK_THROWS_AS(loss_full(er, ei, Tensor({2, 3}), ti, 0.5), Error);
  CHECK_THROWS_AS(loss_full(er, ei, tr, ti, 1.5), Error);
}

TEST_CASE("hybrid loss interpolates between its terms") {
  std::mt19937_64 rng(3);
  const Var er(test::random_tensor({3, 4}, rng)), ei(test::random_tensor({3, 4}, rng));
  const Tensor tr = test::random_tensor({3, 4}, rng), ti = test::random_tensor({3, 4}, rng);
  const auto base = loss_full(er, ei, tr, ti, 0.5).report(0.5);
  for (double mu : {0.0, 0.2, 0.7, 1.0}) {
    const auto r = loss_full(er, ei, tr, ti, mu).report(mu);
    CHECK(r.l_ri == base.l_ri);
    CHECK(r.l_mag == base.l_mag);
    CHECK(r.l_full == doctest::Approx(mu * r.l_ri + (1 - mu) * r.l_mag).epsilon(1e-14));
  }
  CHECK(loss_full(Var(tr), Var(ti), tr, ti, 0.5).l_full.value()[0] == 0.0);
}

TEST_CASE("hybrid loss gradients match finite differences") {
  std::mt19937_64 rng(4);
  const Var er = test::random_param({3, 4}, rng), ei = test::random_param({3, 4}, rng);
  const Tensor tr = test::random_tensor({3, 4}, rng), ti = test::random_tensor({3, 4}, rng);
  const auto res = grad_check([&] { return loss_full(er, ei, tr, ti, 0.3).l_full; },
                              {er, ei});
  CHECK(res.probes.size() == 24);
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("adam update") {
  Var p(Tensor({3}, {1.0, -2.0, 0.5}), true);
  SUBCASE("zero learning rate leaves parameters unchanged") {
    Adam opt(AdamConfig{.lr = 0.0}, {p});
    p.grad() = Tensor({3}, {0.3, -1.0, 2.0});
    opt.step({p});
    CHECK(p.value()[0] == 1.0);
    CHECK(p.value()[1] == -2.0);
    CHECK(opt.steps() == 1);
  }
  SUBCASE("first step moves each weight by lr against its gradient sign") {
    Adam opt(AdamConfig{.lr = 0.01, .eps = 0.0}, {p});
    p.grad() = Tensor({3}, {0.3, -1.0, 2.0});
    CHECK(opt.step({p}) == doctest::Approx(std::sqrt(0.09 + 1.0 + 4.0)));
    CHECK(p.value()[0] == doctest::Approx(0.99).epsilon(1e-12));
    CHECK(p.value()[1] == doctest::Approx(-1.99).epsilon(1e-12));
    CHECK(p.value()[2] == doctest::Approx(0.49).epsilon(1e-12));
  }
  SUBCASE("clipping rescales the gradient before the moments") {
    Adam opt(AdamConfig{.lr = 0.01, .grad_clip = 1.0}, {p});
    p.grad() = Tensor({3}, {3.0, 0.0, 4.0});
    CHECK(opt.step({p}) == doctest::Approx(5.0));
    CHECK(opt.first_moment()[0][0] == doctest::Approx(0.1 * 0.6));
    CHECK(opt.first_moment()[0][2] == doctest::Approx(0.1 * 0.8));
  }
}

TEST_CASE("pair manifests") {
  const fs::path dir = scratch_dir("pairs");
  std::vector<fs::path> clean, noise;
  for (int k = 0; k < 3; ++k) {
    clean.push_back(dir / ("c" + std::to_string(k) + ".wav"));
    write_wav(clean.back(), synth_speech(0.5 + 0.1 * k, k), WavFormat::kFloat32);
  }
  noise.push_back(dir / "n0.wav");
  write_wav(noise.back(), synth_noise(2.0, 9), WavFormat::kFloat32);

  const auto m = build_pairs(clean, noise, snr_grid(), 8, 42, 0.25);
  REQUIRE(m.pairs.size() == 8);
  CHECK(m.split("valid").pairs.size() == 2);
  CHECK(m.split("train").pairs.size() == 6);
  CHECK(m.pairs.back().split == "valid");
  CHECK(build_pairs(clean, noise, snr_grid(), 8, 42, 0.25).pairs == m.pairs);
  CHECK_FALSE(build_pairs(clean, noise, snr_grid(), 8, 43, 0.25).pairs == m.pairs);
  for (const auto& p : m.pairs) {
    CHECK(p.snr_db >= -5.0);
    CHECK(p.snr_db <= 0.0);
  }

  const fs::path path = dir / "m.jsonl";
  m.save(path);
  CHECK(PairManifest::load(path).pairs == m.pairs);

  SUBCASE("realized mixtures are reproducible and hit their SNR") {
    const NoisyPair a = realize(m.pairs[0]), b = realize(m.pairs[0]);
    CHECK(a.noisy.samples == b.noisy.samples);
    REQUIRE(a.noisy.size() == a.clean.size());
    double ec = 0.0, en = 0.0;
    for (std::size_t i = 0; i < a.clean.size(); ++i) {
      ec += a.clean.samples[i] * a.clean.samples[i];
      const double d = a.noisy.samples[i] - a.clean.samples[i];
      en += d * d;
    }
    CHECK(10.0 * std::log10(ec / en) == doctest::Approx(m.pairs[0].snr_db).epsilon(1e-9));
  }
  SUBCASE("unknown manifest fields are rejected") {
    std::ofstream(dir / "bad.jsonl") << R"({"id":"x","clean":"a","noise":"b","snr_db":0,"noise_offset":0,"seed":1,"split":"train","extra":1})"
                                     << "\n";
    CHECK_THROWS_AS(PairManifest::load(dir / "bad.jsonl"), Error);
  }
  fs::remove_all(dir);
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(50, 7, 0);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(epoch_order(50, 7, 0) == a);
  CHECK_FALSE(epoch_order(50, 7, 1) == a);
  CHECK_FALSE(epoch_order(50, 8, 0) == a);
}

TEST_CASE("training is deterministic and resumes exactly") {
  const auto ex = small_examples(6, 1);
  TrainOptions opts;
  opts.batch = 2;
  opts.epochs = 100;
  opts.adam.lr = 2e-3;

  auto run = [&](std::size_t steps) {
    auto m = std::make_unique<DbtModel>(small_model(), 3);
    TrainState st;
    st.seed = 5;
    std::vector<double> losses;
    TrainHooks h;
    h.on_step = [&](const LogEntry& e) {
      losses.push_back(e.loss.l_full);
      return true;
    };
    TrainOptions o = opts;
    o.max_steps = steps;
    train(*m, st, ex, {}, o, {}, h);
    return std::make_tuple(std::move(m), std::move(st), losses);
  };

  const auto [m1, s1, l1] = run(20);
  const auto [m2, s2, l2] = run(20);
  CHECK(l1 == l2);
  CHECK(max_param_diff(*m1, *m2) == 0.0);
  CHECK(l1.back() < l1.front());

  // Interrupt after 10 steps, checkpoint, reload, continue to 20.
  const fs::path dir = scratch_dir("resume");
  {
    const auto [m, st, l] = run(10);
    save_checkpoint(dir / "mid.ckpt", *m, 3, &st);
  }
  LoadedCheckpoint ck = load_checkpoint(dir / "mid.ckpt");
  REQUIRE(ck.state.has_value());
  CHECK(ck.state->step == 10);
  std::vector<double> tail;
  TrainHooks h;
  h.on_step = [&](const LogEntry& e) {
    tail.push_back(e.loss.l_full);
    return true;
  };
  TrainOptions o = opts;
  o.max_steps = 20;
  train(*ck.model, *ck.state, ex, {}, o, {}, h);
  REQUIRE(tail.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) CHECK(tail[k] == l1[10 + k]);
  CHECK(max_param_diff(*ck.model, *m1) == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("training writes logs and best/last checkpoints") {
  const auto ex = small_examples(4, 20);
  const auto valid = small_examples(2, 40);
  const fs::path dir = scratch_dir("trainlog");
  DbtModel m(small_model(), 1);
  TrainState st;
  TrainOptions o;
  o.batch = 2;
  o.epochs = 3;
  std::vector<double> valid_losses;
  TrainHooks h;
  h.on_validate = [&](std::uint64_t, double v) { valid_losses.push_back(v); };
  train(m, st, ex, valid, o, {dir / "log.jsonl", dir / "ckpt"}, h);
  CHECK(st.step == 6);
  CHECK(st.epoch == 3);
  CHECK(valid_losses.size() == 3);
  CHECK(st.best_valid == *std::min_element(valid_losses.begin(), valid_losses.end()));
  CHECK(fs::exists(dir / "ckpt" / "best.ckpt"));
  CHECK(fs::exists(dir / "ckpt" / "last.ckpt"));

  std::ifstream in(dir / "log.jsonl");
  std::string line;
  std::size_t steps = 0, validations = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("valid_l_full")) {
      ++validations;
      continue;
    }
    ++steps;
    const double mu = 0.5;
    CHECK(j.at("l_full").get<double>() ==
          doctest::Approx(mu * j.at("l_ri").get<double>() +
                          (1 - mu) * j.at("l_mag").get<double>()));
    CHECK(j.contains("grad_norm"));
  }
  CHECK(steps == 6);
  CHECK(validations == 3);

  const auto best = load_checkpoint(dir / "ckpt" / "best.ckpt");
  CHECK(evaluate_loss(*best.model, valid).l_full ==
        doctest::Approx(st.best_valid).epsilon(1e-12));
  fs::remove_all(dir);
}

TEST_CASE("non-finite loss stops training with a diagnostic dump") {
  auto ex = small_examples(2, 60);
  ex[0].clean_real[0] = std::nan("");
  const fs::path dir = scratch_dir("nan");
  DbtModel m(small_model(), 1);
  TrainState st;
  TrainOptions o;
  o.batch = 2;
  o.epochs = 1;
  try {
    train(m, st, ex, {}, o, {dir / "log.jsonl", {}});
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
  }
  CHECK(fs::exists(dir / "log.jsonl.nan.json"));
  fs::remove_all(dir);
}

TEST_CASE("checkpoints round trip and reject damage") {
  const fs::path dir = scratch_dir("ckpt");
  ModelConfig cfg = small_model();
  cfg.variant = Variant::kDbtSpade;
  DbtModel m(cfg, 17);
  const auto ex = small_examples(2, 80);
  TrainState st;
  st.seed = 9;
  TrainOptions o;
  o.batch = 2;
  o.max_steps = 2;
  train(m, st, ex, {}, o);
  save_checkpoint(dir / "a.ckpt", m, 17, &st);
  save_checkpoint(dir / "plain.ckpt", m, 17);

  const auto back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.config == cfg);
  CHECK(back.seed == 17);
  CHECK(max_param_diff(*back.model, m) == 0.0);
  REQUIRE(back.state.has_value());
  CHECK(back.state->step == st.step);
  CHECK(back.state->adam.steps() == st.adam.steps());
  CHECK(back.state->adam.config() == st.adam.config());
  for (std::size_t k = 0; k < st.adam.first_moment().size(); ++k) {
    CHECK(max_abs_diff(back.state->adam.first_moment()[k], st.adam.first_moment()[k]) == 0.0);
    CHECK(max_abs_diff(back.state->adam.second_moment()[k], st.adam.second_moment()[k]) == 0.0);
  }
  CHECK_FALSE(load_checkpoint(dir / "plain.ckpt").state.has_value());

  auto code_of = [](const fs::path& p) {
    try {
      load_checkpoint(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kUnsupported;
  };
  CHECK(code_of(dir / "missing.ckpt") == ErrorCode::kIo);

  std::string bytes;
  {
    std::ifstream in(dir / "a.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir / name, std::ios::binary) << data;
    return dir / name;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(code_of(write("magic.ckpt", bad_magic)) == ErrorCode::kFormat);
  CHECK(code_of(write("short.ckpt", bytes.substr(0, bytes.size() / 2))) == ErrorCode::kFormat);
  CHECK(code_of(write("long.ckpt", bytes + "junk")) == ErrorCode::kFormat);
  fs::remove_all(dir);
}

TEST_CASE("enhancement keeps length, is repeatable and passes silence") {
  DbtModel m(preset("micro"), 2);
  for (std::size_t n : {1u, 159u, 160u, 1601u, 8000u}) {
    const Waveform x = synth_noise(static_cast<double>(n) / 16000.0, n);
    REQUIRE(x.size() == n);
    const Waveform a = enhance(m, x), b = enhance(m, x);
    CHECK(a.size() == n);
    CHECK(a.samples == b.samples);
  }
  Waveform zero;
  zero.samples.assign(3200, 0.0);
  const Waveform z = enhance(m, zero);
  CHECK(std::all_of(z.samples.begin(), z.samples.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("overfit loop drives the loss down on a single pair") {
  Waveform clean;
  for (std::size_t i = 0; i < 1600; ++i)
    clean.samples.push_back(0.5 * std::sin(2.0 * M_PI * 440.0 * i / 16000.0));
  NoisyPair pair{"p", clean, clean, 0.0};
  const Waveform noise = synth_noise(0.1, 6);
  for (std::size_t i = 0; i < clean.size(); ++i) pair.noisy.samples[i] += noise.samples[i];
  DbtModel m(small_model(), 1);
  OverfitOptions o;
  o.max_steps = 30;
  o.adam.lr = 3e-3;
  o.check_every = 0;
  const auto r = overfit_single(m, pair, o, small_stft());
  CHECK(r.steps == 30);
  CHECK(r.losses.size() == 30);
  CHECK(r.final_loss < 0.5 * r.initial_loss);
}
