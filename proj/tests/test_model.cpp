// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <random>

#include "doctest.h"
#include "dbt/error.hpp"
#include "dbt/gradcheck.hpp"
#include "dbt/model.hpp"
#include "dbt/ops.hpp"
#include "dbt/training.hpp"
#include "test_util.hpp"

using namespace dbt;
using dbt::test::random_tensor;

namespace {

ModelConfig tiny(Variant v = Variant::kDbt) {
  ModelConfig c = preset("micro");
  c.variant = v;
  c.bins = 17;
  if (v == Variant::kMebOnly || v == Variant::kCpbOnly) {
    c.shared_transformer = false;
    c.interaction = false;
  }
  return c;
}

// Random compressed noisy planes, B x 1 x T x F.
std::pair<Tensor, Tensor> planes(std::size_t b, std::size_t t, std::size_t f,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {random_tensor({b, 1, t, f}, rng), random_tensor({b, 1, t, f}, rng)};
}

// Moves parameters off their initial values so that zero-initialized
// scalars (aggregation gamma, biases) take part.
void perturb(DbtModel& m, std::uint64_t seed, double scale = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  for (const auto& [name, v] : m.params().entries()) {
    Var p = v;
    for (double& x : p.mutable_value().values()) x += nd(rng);
  }
}

}  // namespace

TEST_CASE("parameter counts match an independent layer-by-layer tally") {
  // Frozen from a separate per-layer formula (conv: out*in*kt*kf + out,
  // LN: 2C, PReLU: C, GRU: 3H(in + H) + 6H per direction, ...).
  const std::pair<const char*, std::size_t> expected[] = {
      {"micro", 35245},     {"micro-meb", 21213}, {"dbt", 2910941},
      {"meb", 908977},      {"cpb", 1180780},     {"dcb", 3182744},
      {"dbt-1", 2114393},   {"dbt-d4", 3210269},
  };
  for (const auto& [name, count] : expected) {
    CAPTURE(name);
    CHECK(count_params(DbtModel(preset(name), 0)) == count);
  }
}

TEST_CASE("parameter order and names are stable") {
  DbtModel m(preset("micro"), 0);
  const auto& e = m.params().entries();
  REQUIRE(e.size() > 10);
  CHECK(e.front().first == "encoder0.stem.conv.weight");
  CHECK(m.params().contains("core.block0.time.mhsa.q.weight"));
  CHECK(m.params().contains("branch0.block1.alpha"));
  CHECK(m.params().contains("branch1.real_decoder.trunk.to_plane.weight"));
  CHECK(m.params().contains("branch0.mask_decoder.out.bias"));
  CHECK(m.params().contains("interact1.into0.conv.weight"));
  CHECK(m.params().contains("branch1.aggregate.gamma"));
  CHECK_FALSE(m.params().contains("branch0.core.block0.time.mhsa.q.weight"));

  DbtModel meb(preset("micro-meb"), 0);
  CHECK(meb.params().contains("branch0.core.block0.freq.ffn.gru_fwd.w_hh"));
  CHECK_FALSE(meb.params().contains("interact0.into0.conv.weight"));
}

TEST_CASE("model initialization is seed-deterministic") {
  DbtModel a(tiny(), 5), b(tiny(), 5), c(tiny(), 6);
  const auto [r, i] = planes(1, 4, 17, 1);
  const auto oa = a.forward(r, i), ob = b.forward(r, i), oc = c.forward(r, i);
  CHECK(max_abs_diff(oa.final_real.value(), ob.final_real.value()) == 0.0);
  CHECK(max_abs_diff(oa.final_real.value(), oc.final_real.value()) > 0.0);
}

TEST_CASE("forward trace reports the golden shapes") {
  ModelConfig c = preset("dbt");
  DbtModel m(c, 0);
  const auto [r, i] = planes(1, 3, 161, 2);
  ForwardTrace tr;
  const auto out = m.forward(r, i, nullptr, &tr);
  REQUIRE(tr.encoder_out.size() == 2);
  CHECK(tr.encoder_out[0] == Shape{1, 64, 3, 80});
  CHECK(tr.encoder_out[1] == Shape{1, 64, 3, 80});
  CHECK(tr.time_fold.front() == Shape{80, 3, 64});
  CHECK(tr.freq_fold.front() == Shape{3, 80, 64});
  REQUIRE(tr.aggregate_weights.size() == 2);
  CHECK(tr.aggregate_weights[0].shape() == Shape{1, 4});
  for (const auto& s : tr.decoder_out) CHECK(s == Shape{1, 1, 3, 161});
  CHECK(out.final_real.shape() == Shape{1, 1, 3, 161});
}

TEST_CASE("reconstruction probes") {
  DbtModel m(tiny(), 1);
  perturb(m, 9);
  const auto [r, i] = planes(2, 5, 17, 3);

  SUBCASE("unit mask and zero residual return the noisy spectrum") {
    ForwardProbe p{1.0, 0.0};
    const auto out = m.forward(r, i, &p);
    CHECK(max_abs_diff(out.final_real.value(), r) < 1e-12);
    CHECK(max_abs_diff(out.final_imag.value(), i) < 1e-12);
  }
  SUBCASE("zero mask leaves the complex branch alone") {
    ForwardProbe p{0.0, std::nullopt};
    const auto out = m.forward(r, i, &p);
    CHECK(max_abs_diff(out.final_real.value(), out.cpb_real.value()) == 0.0);
    CHECK(max_abs_diff(out.final_imag.value(), out.cpb_imag.value()) == 0.0);
  }
  SUBCASE("the two branch outputs add up") {
    const auto out = m.forward(r, i);
    Tensor sum = out.meb_real.value();
    for (std::size_t k = 0; k < sum.numel(); ++k) sum[k] += out.cpb_real.value()[k];
    CHECK(max_abs_diff(out.final_real.value(), sum) == 0.0);
  }
  SUBCASE("the magnitude branch keeps the noisy phase") {
    const auto out = m.forward(r, i);
    const Tensor& mr = out.meb_real.value();
    const Tensor& mi = out.meb_imag.value();
    const Tensor& mask = out.mask.value();
    for (std::size_t k = 0; k < r.numel(); ++k) {
      const double mag = std::hypot(r[k], i[k]);
      CHECK(mr[k] * i[k] - mi[k] * r[k] == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(std::hypot(mr[k], mi[k]) == doctest::Approx(mask[k] * mag).epsilon(1e-12));
      CHECK(mr[k] * r[k] + mi[k] * i[k] >= 0.0);
    }
  }
}

TEST_CASE("magnitude-average variant against an explicit atan2 oracle") {
  DbtModel m(tiny(Variant::kDbtSpade), 2);
  perturb(m, 4);
  const auto [r, i] = planes(1, 4, 17, 5);
  const auto out = m.forward(r, i);
  const Tensor& cr = out.cpb_real.value();
  const Tensor& ci = out.cpb_imag.value();
  for (std::size_t k = 0; k < r.numel(); ++k) {
    const double mag = 0.5 * (out.mask.value()[k] * std::hypot(r[k], i[k]) +
                              std::hypot(cr[k], ci[k]));
    const double theta = std::atan2(ci[k], cr[k]);
    CHECK(out.final_real.value()[k] == doctest::Approx(mag * std::cos(theta)).epsilon(1e-10));
    CHECK(out.final_imag.value()[k] == doctest::Approx(mag * std::sin(theta)).epsilon(1e-10));
  }
}

TEST_CASE("variants fill the fields they produce") {
  const auto [r, i] = planes(1, 3, 17, 6);
  {
    const auto o = DbtModel(tiny(Variant::kMebOnly), 0).forward(r, i);
    CHECK(o.mask.defined());
    CHECK_FALSE(o.cpb_real.defined());
    CHECK(max_abs_diff(o.final_real.value(), o.meb_real.value()) == 0.0);
  }
  {
    const auto o = DbtModel(tiny(Variant::kCpbOnly), 0).forward(r, i);
    CHECK_FALSE(o.mask.defined());
    CHECK(o.final_real.defined());
  }
  {
    const auto o = DbtModel(tiny(Variant::kDcb), 0).forward(r, i);
    CHECK_FALSE(o.mask.defined());
    CHECK(o.meb_real.defined());
    CHECK(o.cpb_real.defined());
  }
}

TEST_CASE("batch elements are processed independently") {
  DbtModel m(tiny(), 3);
  perturb(m, 5);
  const auto [r, i] = planes(3, 6, 17, 7);
  const auto whole = m.forward(r, i);
  const std::size_t area = 6 * 17;
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor rb({1, 1, 6, 17}), ib({1, 1, 6, 17});
    std::copy_n(r.data() + b * area, area, rb.data());
    std::copy_n(i.data() + b * area, area, ib.data());
    const auto one = m.forward(rb, ib);
    for (std::size_t k = 0; k < area; ++k) {
      CHECK(one.final_real.value()[k] ==
            doctest::Approx(whole.final_real.value()[b * area + k]).epsilon(1e-12));
      CHECK(one.final_imag.value()[k] ==
            doctest::Approx(whole.final_imag.value()[b * area + k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("identical batch elements give identical outputs") {
  DbtModel m(tiny(), 3);
  const auto [r, i] = planes(1, 4, 17, 8);
  Tensor r2({2, 1, 4, 17}), i2({2, 1, 4, 17});
  std::copy_n(r.data(), r.numel(), r2.data());
  std::copy_n(r.data(), r.numel(), r2.data() + r.numel());
  std::copy_n(i.data(), i.numel(), i2.data());
  std::copy_n(i.data(), i.numel(), i2.data() + i.numel());
  const auto o = m.forward(r2, i2);
  for (std::size_t k = 0; k < r.numel(); ++k)
    CHECK(o.final_real.value()[k] == o.final_real.value()[r.numel() + k]);
}

TEST_CASE("end-to-end gradients through forward and loss on a micro model") {
  DbtModel m(tiny(), 4);
  perturb(m, 6, 0.1);
  const auto [r, i] = planes(1, 6, 17, 9);
  const auto [tr, ti] = planes(1, 6, 17, 10);
  GradCheckOptions opts;
  opts.samples = 60;
  opts.seed = 12;
  const auto res = grad_check(
      [&] {
        const auto out = m.forward(r, i);
        return loss_full(out.final_real, out.final_imag, tr, ti, 0.5).l_full;
      },
      m.params().vars(), opts);
  CHECK(res.probes.size() == 60);
  CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("analytic and traced MAC counts agree") {
  for (const char* name : {"micro", "micro-meb", "dbt", "meb", "dcb", "dbt-d3"}) {
    CAPTURE(name);
    const ModelConfig c = preset(name);
    DbtModel m(c, 0);
    CHECK(traced_macs(m, 0.05) == count_macs(c, 0.05));
  }
}

TEST_CASE("model input contracts") {
  DbtModel m(tiny(), 0);
  CHECK_THROWS_AS(m.forward(Tensor({1, 1, 4, 16}), Tensor({1, 1, 4, 16})), Error);
  CHECK_THROWS_AS(m.forward(Tensor({1, 1, 4, 17}), Tensor({1, 1, 5, 17})), Error);
  Spectrogram raw;
  raw.real = Tensor({4, 17});
  raw.imag = Tensor({4, 17});
  CHECK_THROWS_AS(m.forward(raw), Error);
  raw.compressed = true;
  raw.exponent = 0.3;
  CHECK_THROWS_AS(m.forward(raw), Error);
  raw.exponent = 0.5;
  CHECK(m.forward(raw).final_real.shape() == Shape{1, 1, 4, 17});
  ModelConfig bad = tiny();
  bad.heads = 3;
  CHECK_THROWS_AS(DbtModel(bad, 0), Error);
  CHECK_THROWS_AS(preset("nope"), Error);
  CHECK(parse_variant(variant_name(Variant::kDbtSpade)) == Variant::kDbtSpade);
}
