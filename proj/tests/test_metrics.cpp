// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "doctest.h"
#include "dbt/error.hpp"
#include "dbt/metrics.hpp"
#include "dbt/model.hpp"
#include "dbt/synth.hpp"
#include "dbt/training.hpp"

using namespace dbt;

namespace {

Waveform noise(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Waveform w;
  w.samples.resize(n);
  for (double& x : w.samples) x = nd(rng);
  return w;
}

double energy(const Waveform& w) {
  return std::inner_product(w.samples.begin(), w.samples.end(),
                            w.samples.begin(), 0.0);
}

Waveform scaled(const Waveform& w, double a) {
  Waveform o = w;
  for (double& x : o.samples) x *= a;
  return o;
}

Waveform plus(const Waveform& a, const Waveform& b) {
  Waveform o = a;
  for (std::size_t i = 0; i < o.size(); ++i) o.samples[i] += b.samples[i];
  return o;
}

// Removes the component of `w` along `ref`.
Waveform orthogonalize(const Waveform& w, const Waveform& ref) {
  double wr = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) wr += w.samples[i] * ref.samples[i];
  return plus(w, scaled(ref, -wr / energy(ref)));
}

}  // namespace

TEST_CASE("sdr reference values") {
  const Waveform ref = noise(4000, 1);
  CHECK(sdr(ref, ref) == kSdrClampDb);
  Waveform zero;
  zero.samples.assign(ref.size(), 0.0);
  CHECK(sdr(zero, ref) == doctest::Approx(0.0).epsilon(1e-12));
  // Not scale-invariant: doubling the reference leaves an error of |ref|.
  CHECK(sdr(scaled(ref, 2.0), ref) == doctest::Approx(0.0).epsilon(1e-12));

  // Error energy exactly one tenth of the reference energy.
  Waveform e = noise(4000, 2);
  e = scaled(e, std::sqrt(0.1 * energy(ref) / energy(e)));
  CHECK(sdr(plus(ref, e), ref) == doctest::Approx(10.0).epsilon(1e-10));
}

TEST_CASE("si-sdr reference values") {
  const Waveform ref = noise(4000, 3);
  CHECK(si_sdr(scaled(ref, 2.0), ref) == kSdrClampDb);
  // alpha = -1 projects -ref exactly onto itself, leaving no residual.
  CHECK(si_sdr(scaled(ref, -1.0), ref) == kSdrClampDb);
  const Waveform orth = orthogonalize(noise(4000, 4), ref);
  CHECK(si_sdr(orth, ref) == -kSdrClampDb);

  // Residual orthogonal to ref with energy ratio 100:1 gives 20 dB.
  Waveform n = orthogonalize(noise(4000, 5), ref);
  n = scaled(n, std::sqrt(0.01 * energy(ref) / energy(n)));
  CHECK(si_sdr(plus(ref, n), ref) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("si-sdr is invariant to positive scaling") {
  const Waveform ref = noise(3000, 6);
  const Waveform est = plus(ref, noise(3000, 7, 0.7));
  const double base = si_sdr(est, ref);
  for (double a : {0.01, 0.5, 3.0, 250.0})
    CHECK(si_sdr(scaled(est, a), ref) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("segsnr clamps and silence handling") {
  const Waveform ref = noise(3200, 8);
  CHECK(segsnr(ref, ref) == 35.0);

  const Waveform loud = plus(ref, noise(3200, 9, 100.0));
  CHECK(segsnr(loud, ref) == -10.0);
  // Perfect enhancement of a mixture at the floor.
  CHECK(segsnr(ref, ref) - segsnr(loud, ref) == 45.0);

  SUBCASE("silent reference frames do not count") {
    // 19 frames; frames fully inside [0, 1600) see a silent reference.
    Waveform r = ref;
    std::fill(r.samples.begin(), r.samples.begin() + 1600, 0.0);
    Waveform est = r;
    for (std::size_t i = 0; i < 1600; ++i) est.samples[i] = 1.0;
    // Silent frames excluded: all remaining frames overlap nonsilent
    // samples. Frames 0..8 lie entirely in the silent region.
    SegSnrOptions o;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < 19; ++k) {
      const std::size_t s = k * 160;
      double er = 0.0, ee = 0.0;
      for (std::size_t i = s; i < s + 320; ++i) {
        er += r.samples[i] * r.samples[i];
        ee += (r.samples[i] - est.samples[i]) * (r.samples[i] - est.samples[i]);
      }
      if (er == 0.0) continue;
      sum += ee == 0.0 ? o.ceil_db : std::clamp(10.0 * std::log10(er / ee), -10.0, 35.0);
      ++used;
    }
    CHECK(used == 10);
    CHECK(segsnr(est, r) == doctest::Approx(sum / used).epsilon(1e-12));
  }
}

TEST_CASE("segsnr never increases with more noise") {
  const Waveform ref = noise(8000, 10);
  const Waveform n = noise(8000, 11);
  double prev = 1e9;
  for (double s = 0.0; s <= 30.0; s += s < 0.1 ? 0.01 : s * 0.5) {
    const double v = segsnr(plus(ref, scaled(n, s)), ref);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("metric preconditions") {
  const Waveform a = noise(100, 12);
  CHECK_THROWS_AS(sdr(a, noise(99, 12)), Error);
  Waveform silent;
  silent.samples.assign(100, 0.0);
  CHECK_THROWS_AS(sdr(a, silent), Error);
  CHECK_THROWS_AS(si_sdr(a, silent), Error);
  CHECK_THROWS_AS(segsnr(a, silent), Error);
}

TEST_CASE("report aggregation") {
  MetricReport r;
  r.utterances = {
      {"a", -5.0, {{"x", 1.0}, {"y", 10.0}}},
      {"b", -5.0, {{"x", 3.0}, {"y", 20.0}}},
      {"c", 0.0, {{"x", 5.0}, {"y", 60.0}}},
  };
  const auto buckets = r.bucket_means();
  REQUIRE(buckets.size() == 2);
  CHECK(buckets.at(-5.0).at("x") == 2.0);
  CHECK(buckets.at(-5.0).at("y") == 15.0);
  CHECK(buckets.at(0.0).at("x") == 5.0);
  const auto all = r.overall_means();
  CHECK(all.at("x") == 3.0);
  CHECK(all.at("y") == 30.0);
  CHECK(r.metric_names() == std::vector<std::string>{"x", "y"});

  const std::string t = r.table();
  CHECK(t.find("avg") != std::string::npos);
  CHECK(t.find("-5.0") != std::string::npos);
  CHECK(t.find("30.00") != std::string::npos);

  const auto path = std::filesystem::temp_directory_path() / "dbtnet_report.jsonl";
  r.save_jsonl(path);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("id") == r.utterances[lines].id);
    CHECK(j.at("x").get<double>() == r.utterances[lines].scores.at("x"));
    ++lines;
  }
  CHECK(lines == 3);
  std::filesystem::remove(path);
}

TEST_CASE("external scorer protocol") {
  const Waveform a = noise(800, 13, 0.1);
  SUBCASE("bare number") {
    ExternalScorer s{"ext", "sh -c 'test -s \"$0\" && test -s \"$1\" && echo 3.25'"};
    const auto out = s.score(a, a);
    CHECK(out.size() == 1);
    CHECK(out.at("ext") == 3.25);
  }
  SUBCASE("key=value pairs") {
    ExternalScorer s{"q", "echo pesq=2.5 stoi=0.75 #"};
    const auto out = s.score(a, a);
    CHECK(out.at("q.pesq") == 2.5);
    CHECK(out.at("q.stoi") == 0.75);
  }
  SUBCASE("failures") {
    CHECK_THROWS_AS((ExternalScorer{"bad", "false"}.score(a, a)), Error);
    CHECK_THROWS_AS((ExternalScorer{"bad", "echo nope #"}.score(a, a)), Error);
  }
}

TEST_CASE("corpus evaluation keeps every utterance and derives deltas") {
  SynthCorpusOptions o;
  o.minutes = 0.2;
  o.utterance_seconds = 1.0;
  o.noise_files = 1;
  o.noise_seconds = 5.0;
  o.valid_fraction = 0.25;
  o.seed = 3;
  const auto pairs = synth_pairs(o, "valid");
  REQUIRE(!pairs.empty());
  ModelConfig c = preset("micro");
  DbtModel m(c, 0);
  const auto rep = evaluate_corpus(m, pairs);
  REQUIRE(rep.utterances.size() == pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& u = rep.utterances[k];
    CHECK(u.id == pairs[k].id);
    for (const char* name : {"sdr", "si_sdr", "segsnr"}) {
      const std::string n = name;
      CHECK(u.scores.at("d_" + n) == u.scores.at(n) - u.scores.at(n + "_noisy"));
    }
    CHECK(u.scores.at("sdr_noisy") == doctest::Approx(sdr(pairs[k].noisy, pairs[k].clean)));
  }
  CHECK_THROWS_AS(evaluate_corpus(m, pairs, {"pesq"}), Error);
}
