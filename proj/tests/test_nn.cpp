// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <random>

#include "doctest.h"
#include "dbt/error.hpp"
#include "dbt/nn.hpp"
#include "dbt/ops.hpp"
#include "test_util.hpp"

using namespace dbt;
using dbt::test::random_tensor;

namespace {

struct Fixture {
  nn::ParamStore store;
  nn::Initializer init{7};
  nn::Builder b{store, init, ""};
};

const std::vector<std::size_t> kDilations{1, 2, 4, 8};

}  // namespace

TEST_CASE("frequency plan halves per stage") {
  CHECK(nn::frequency_plan(161, 4) == std::vector<std::size_t>{161, 80, 40, 20, 10});
  CHECK(nn::frequency_plan(161, 1) == std::vector<std::size_t>{161, 80});
  CHECK(nn::frequency_plan(17, 2) == std::vector<std::size_t>{17, 8, 4});
  CHECK_THROWS_AS(nn::frequency_plan(3, 3), Error);
}

TEST_CASE("encoder and decoder golden shapes for the default width") {
  Fixture f;
  nn::Encoder mag(f.b.sub("mag"), 1, 64, 161, 1, kDilations);
  nn::Encoder ri(f.b.sub("ri"), 2, 64, 161, 1, kDilations);
  std::mt19937_64 rng(1);
  Var x1(random_tensor({2, 1, 7, 161}, rng));
  Var x2(random_tensor({2, 2, 7, 161}, rng));
  CHECK(mag(x1).shape() == Shape{2, 64, 7, 80});
  CHECK(ri(x2).shape() == Shape{2, 64, 7, 80});
  CHECK_THROWS_AS(mag(x2), Error);

  nn::MaskingDecoder md(f.b.sub("md"), 64, 161, 1, kDilations);
  nn::ComplexDecoder cd(f.b.sub("cd"), 64, 161, 1, kDilations);
  Var h(random_tensor({2, 64, 7, 80}, rng));
  CHECK(md(h).shape() == Shape{2, 1, 7, 161});
  CHECK(cd(h).shape() == Shape{2, 1, 7, 161});

  nn::Encoder deep(f.b.sub("deep"), 2, 16, 161, 3, kDilations);
  CHECK(deep(Var(random_tensor({1, 2, 4, 161}, rng))).shape() == Shape{1, 16, 4, 20});
  nn::DecoderTrunk up(f.b.sub("up"), 16, 161, 3, kDilations);
  CHECK(up(Var(random_tensor({1, 16, 4, 20}, rng))).shape() == Shape{1, 1, 4, 161});
}

TEST_CASE("dense block is causal with a 16-frame receptive field") {
  Fixture f;
  nn::DenseBlock dense(f.b, 4, kDilations);
  std::mt19937_64 rng(3);
  Tensor base = random_tensor({1, 4, 40, 9}, rng);
  Tensor bumped = base;
  const std::size_t t0 = 10;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t k = 0; k < 9; ++k) bumped.at(0, c, t0, k) += 1.0;
  const Tensor y0 = dense(Var(base)).value();
  const Tensor y1 = dense(Var(bumped)).value();
  auto frame_diff = [&](std::size_t t) {
    double d = 0.0;
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < 9; ++k)
        d = std::max(d, std::abs(y0.at(0, c, t, k) - y1.at(0, c, t, k)));
    return d;
  };
  for (std::size_t t = 0; t < t0; ++t) CHECK(frame_diff(t) == 0.0);
  CHECK(frame_diff(t0) > 0.0);
  CHECK(frame_diff(t0 + 15) > 0.0);
  for (std::size_t t = t0 + 16; t < 40; ++t) CHECK(frame_diff(t) == 0.0);
}

TEST_CASE("zero input through zero-bias blocks") {
  Fixture f;
  Var zeros(Tensor({1, 8, 5, 10}, 0.0));
  nn::ConvNormAct cna(f.b.sub("cna"), 8, 8, 2, 3,
                      ops::ConvGeom{2, 3, 1, 1, 1, 1, 1});
  const Tensor y = cna(zeros).value();
  CHECK(max_abs_diff(y, Tensor(y.shape(), 0.0)) == 0.0);

  nn::MaskingDecoder md(f.b.sub("md"), 8, 21, 1, kDilations);
  const Tensor mask = md(zeros).value();
  CHECK(mask.shape() == Shape{1, 1, 5, 21});
  CHECK(max_abs_diff(mask, Tensor(mask.shape(), 0.5)) == 0.0);

  nn::ComplexDecoder cd(f.b.sub("cd"), 8, 21, 1, kDilations);
  const Tensor r = cd(zeros).value();
  CHECK(max_abs_diff(r, Tensor(r.shape(), 0.0)) == 0.0);
}

TEST_CASE("mask lies strictly inside (0, 1)") {
  Fixture f;
  nn::MaskingDecoder md(f.b, 4, 17, 1, kDilations);
  std::mt19937_64 rng(5);
  const Tensor m = md(Var(random_tensor({2, 4, 6, 8}, rng, 10.0))).value();
  for (double v : m.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("initialization is seed-deterministic") {
  auto build = [](std::uint64_t seed) {
    nn::ParamStore s;
    nn::Initializer init(seed);
    nn::Builder b{s, init, "enc"};
    nn::Encoder e(b, 2, 8, 17, 1, kDilations);
    std::vector<double> flat;
    for (const auto& [name, v] : s.entries())
      flat.insert(flat.end(), v.value().values().begin(), v.value().values().end());
    return flat;
  };
  CHECK(build(3) == build(3));
  CHECK(build(3) != build(4));
}

TEST_CASE("biases start at zero and slopes at 0.25") {
  Fixture f;
  nn::ConvNormAct cna(f.b.sub("x"), 3, 5, 1, 1, ops::ConvGeom{});
  for (double v : cna.conv.bias.value().values()) CHECK(v == 0.0);
  for (double v : cna.norm.beta.value().values()) CHECK(v == 0.0);
  for (double v : cna.norm.gamma.value().values()) CHECK(v == 1.0);
  for (double v : cna.act.slope.value().values()) CHECK(v == 0.25);
  CHECK(f.store.contains("x.conv.weight"));
  CHECK_THROWS_AS(f.store.add("x.conv.weight", Tensor({1})), Error);
}

TEST_CASE("orthogonal blocks have orthonormal columns") {
  nn::Initializer init(9);
  const std::size_t n = 6;
  const Tensor q = init.orthogonal_blocks(3, n);
  REQUIRE(q.shape() == Shape{3 * n, n});
  for (std::size_t blk = 0; blk < 3; ++blk)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r)
          dot += q[(blk * n + r) * n + i] * q[(blk * n + r) * n + j];
        CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
      }
}

TEST_CASE("pointwise conv MACs count C_in * C_out * T * F") {
  Fixture f;
  nn::Conv2d conv(f.b, 64, 64, 1, 1, ops::ConvGeom{});
  Var x(Tensor({1, 64, 11, 80}, 0.5));
  MacCounter macs;
  conv(x);
  CHECK(macs.total() == 64.0 * 64.0 * 11.0 * 80.0);
}

TEST_CASE("merge concatenates before projecting") {
  Fixture f;
  nn::Merge m(f.b, 6, 4);
  std::mt19937_64 rng(2);
  const Var a(random_tensor({1, 4, 3, 5}, rng)), c(random_tensor({1, 2, 3, 5}, rng));
  const Var parts[] = {a, c};
  CHECK(m(parts).shape() == Shape{1, 4, 3, 5});
  const Var wrong[] = {a, a};
  CHECK_THROWS_AS(m(wrong), Error);
}
