// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "dbt/error.hpp"
#include "dbt/kernels.hpp"

using namespace dbt;

namespace {

std::vector<double> randv(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("avx2 gemm matches scalar reference across shapes and transposes") {
  if (!kernels::avx2_supported()) return;
  std::mt19937_64 rng(7);
  const std::size_t dims[] = {1, 3, 4, 7, 8, 9, 31, 97, 130, 300};
  for (std::size_t m : dims)
    for (std::size_t n : {1ul, 5ul, 8ul, 17ul, 260ul})
      for (std::size_t k : {1ul, 6ul, 64ul, 300ul})
        for (int ta = 0; ta < 2; ++ta)
          for (int tb = 0; tb < 2; ++tb)
            for (int acc = 0; acc < 2; ++acc) {
              const std::size_t lda = (ta ? m : k) + 2;
              const std::size_t ldb = (tb ? k : n) + 1;
              const std::size_t ldc = n + 3;
              auto a = randv((ta ? k : m) * lda, rng);
              auto b = randv((tb ? n : k) * ldb, rng);
              auto c0 = randv(m * ldc, rng);
              auto c1 = c0;
              kernels::scalar::gemm(ta, tb, m, n, k, a.data(), lda, b.data(),
                                    ldb, c0.data(), ldc, acc);
              kernels::avx2::gemm(ta, tb, m, n, k, a.data(), lda, b.data(),
                                  ldb, c1.data(), ldc, acc);
              double worst = 0.0;
              for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                  worst = std::max(worst, std::abs(c0[i * ldc + j] -
                                                   c1[i * ldc + j]));
              REQUIRE(worst < 1e-12 * static_cast<double>(k + 1));
              // Padding columns beyond n stay untouched.
              for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = n; j < ldc; ++j)
                  REQUIRE(c0[i * ldc + j] == c1[i * ldc + j]);
            }
}

TEST_CASE("avx2 dot and axpy match scalar") {
  if (!kernels::avx2_supported()) return;
  std::mt19937_64 rng(3);
  for (std::size_t n : {0ul, 1ul, 3ul, 4ul, 8ul, 13ul, 1000ul}) {
    auto x = randv(n, rng), y = randv(n, rng);
    CHECK(kernels::avx2::dot(x.data(), y.data(), n) ==
          doctest::Approx(kernels::scalar::dot(x.data(), y.data(), n)).epsilon(1e-12));
    auto y0 = y, y1 = y;
    kernels::scalar::axpy(n, 0.7, x.data(), y0.data());
    kernels::avx2::axpy(n, 0.7, x.data(), y1.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(y0[i] == doctest::Approx(y1[i]));
  }
}

TEST_CASE("gemm propagates NaN on both backends") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double a[4] = {nan, 0.0, 0.0, 0.0};
  double b[4] = {0.0, 0.0, 0.0, 0.0};
  double c[4];
  kernels::scalar::gemm(false, false, 2, 2, 2, a, 2, b, 2, c, 2, false);
  CHECK(std::isnan(c[0]));
  if (kernels::avx2_supported()) {
    kernels::avx2::gemm(false, false, 2, 2, 2, a, 2, b, 2, c, 2, false);
    CHECK(std::isnan(c[0]));
  }
}

TEST_CASE("backend selection") {
  const auto before = kernels::active_backend();
  {
    kernels::ScopedBackend s(kernels::Backend::kScalar);
    CHECK(kernels::active_backend() == kernels::Backend::kScalar);
  }
  CHECK(kernels::active_backend() == before);
  if (kernels::avx2_supported())
    CHECK(before == kernels::Backend::kAvx2);
  else
    CHECK_THROWS_AS(kernels::set_backend(kernels::Backend::kAvx2), Error);
}

TEST_CASE("avx2 exp, sigmoid and tanh match the scalar reference") {
  if (!kernels::avx2_supported()) return;
  std::vector<double> x;
  for (double v = -40.0; v <= 40.0; v += 0.0137) x.push_back(v);
  for (double v : {0.0, -0.0, 1e-12, -1e-12, 700.0, -700.0, 745.0, -745.0})
    x.push_back(v);
  const std::size_t n = x.size();
  std::vector<double> ys(n), yv(n);
  kernels::scalar::exp(n, x.data(), ys.data());
  kernels::avx2::exp(n, x.data(), yv.data());
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(x[i]) > 709.0) continue;  // outside the normal range
    REQUIRE(std::abs(yv[i] - ys[i]) <= 4e-16 * ys[i]);
  }
  kernels::scalar::sigmoid(n, x.data(), ys.data());
  kernels::avx2::sigmoid(n, x.data(), yv.data());
  for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(yv[i] - ys[i]) < 1e-15);
  kernels::scalar::tanh(n, x.data(), ys.data());
  kernels::avx2::tanh(n, x.data(), yv.data());
  for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(yv[i] - ys[i]) < 2e-15);
  // Saturation and NaN.
  double big[4] = {1e6, -1e6, std::numeric_limits<double>::quiet_NaN(), 0.0};
  double out[4];
  kernels::avx2::sigmoid(4, big, out);
  CHECK(out[0] == 1.0);
  CHECK(out[1] < 1e-300);
  CHECK(std::isnan(out[2]));
  CHECK(out[3] == 0.5);
  kernels::avx2::tanh(4, big, out);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == -1.0);
  CHECK(std::isnan(out[2]));
}
