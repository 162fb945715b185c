// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// AVX2/FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the runtime CPUID check in kernels.cpp.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <new>
#include <vector>

#include "dbt/kernels.hpp"

namespace dbt::kernels::avx2 {
namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 8;
constexpr std::size_t kMc = 96;
constexpr std::size_t kKc = 256;
constexpr std::size_t kNc = 2048;

template <typename T>
struct Aligned32 {
  using value_type = T;
  Aligned32() = default;
  template <typename U>
  Aligned32(const Aligned32<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{32}));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{32}); }
  bool operator==(const Aligned32&) const { return true; }
};

struct PackBuffers {
  std::vector<double, Aligned32<double>> a;
  std::vector<double, Aligned32<double>> b;
};

PackBuffers& buffers() {
  thread_local PackBuffers bufs;
  return bufs;
}

// Packs op(A)[ic:ic+mc, pc:pc+kc] into kMr-row panels, zero-padded.
void pack_a(bool trans, const double* a, std::size_t lda, std::size_t ic,
            std::size_t pc, std::size_t mc, std::size_t kc, double* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr, out += kMr * kc) {
    const std::size_t rows = std::min(kMr, mc - ir);
    if (trans) {
      for (std::size_t p = 0; p < kc; ++p) {
        const double* src = a + (pc + p) * lda + ic + ir;
        for (std::size_t r = 0; r < kMr; ++r)
          out[p * kMr + r] = r < rows ? src[r] : 0.0;
      }
      continue;
    }
    // Row-major A: walk each row contiguously.
    for (std::size_t r = 0; r < kMr; ++r) {
      if (r >= rows) {
        for (std::size_t p = 0; p < kc; ++p) out[p * kMr + r] = 0.0;
        continue;
      }
      const double* src = a + (ic + ir + r) * lda + pc;
      for (std::size_t p = 0; p < kc; ++p) out[p * kMr + r] = src[p];
    }
  }
}

// Packs op(B)[pc:pc+kc, jc:jc+nc] into kNr-column panels, zero-padded.
void pack_b(bool trans, const double* b, std::size_t ldb, std::size_t pc,
            std::size_t jc, std::size_t kc, std::size_t nc, double* out) {
  for (std::size_t jr = 0; jr < nc; jr += kNr, out += kNr * kc) {
    const std::size_t cols = std::min(kNr, nc - jr);
    if (trans) {
      // Column j of op(B) is row j of B: copy it contiguously.
      for (std::size_t c = 0; c < kNr; ++c) {
        if (c >= cols) {
          for (std::size_t p = 0; p < kc; ++p) out[p * kNr + c] = 0.0;
          continue;
        }
        const double* src = b + (jc + jr + c) * ldb + pc;
        for (std::size_t p = 0; p < kc; ++p) out[p * kNr + c] = src[p];
      }
      continue;
    }
    for (std::size_t p = 0; p < kc; ++p) {
      const double* src = b + (pc + p) * ldb + jc + jr;
      double* dst = out + p * kNr;
      if (cols == kNr) {
        _mm256_store_pd(dst, _mm256_loadu_pd(src));
        _mm256_store_pd(dst + 4, _mm256_loadu_pd(src + 4));
      } else {
        for (std::size_t c = 0; c < kNr; ++c) dst[c] = c < cols ? src[c] : 0.0;
      }
    }
  }
}

// c[6 x 8] += a_panel * b_panel over kc; twelve accumulators keep both
// FMA ports busy.
inline void micro_kernel(std::size_t kc, const double* a, const double* b,
                         double* c, std::size_t ldc) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  __m256d c40 = _mm256_setzero_pd(), c41 = _mm256_setzero_pd();
  __m256d c50 = _mm256_setzero_pd(), c51 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_load_pd(b);
    const __m256d b1 = _mm256_load_pd(b + 4);
    __m256d av = _mm256_broadcast_sd(a);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + 1);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
    av = _mm256_broadcast_sd(a + 4);
    c40 = _mm256_fmadd_pd(av, b0, c40);
    c41 = _mm256_fmadd_pd(av, b1, c41);
    av = _mm256_broadcast_sd(a + 5);
    c50 = _mm256_fmadd_pd(av, b0, c50);
    c51 = _mm256_fmadd_pd(av, b1, c51);
    a += kMr;
    b += kNr;
  }
  auto acc = [](double* dst, __m256d lo, __m256d hi) {
    _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), lo));
    _mm256_storeu_pd(dst + 4, _mm256_add_pd(_mm256_loadu_pd(dst + 4), hi));
  };
  acc(c, c00, c01);
  acc(c + ldc, c10, c11);
  acc(c + 2 * ldc, c20, c21);
  acc(c + 3 * ldc, c30, c31);
  acc(c + 4 * ldc, c40, c41);
  acc(c + 5 * ldc, c50, c51);
}

// exp on four lanes: x = n*ln2 + r with |r| <= ln2/2, degree-13 Taylor
// polynomial for e^r, then scaling by 2^n through the exponent bits.
// Inputs are clamped to the normal range; NaN propagates.
inline __m256d exp4(__m256d x) {
  x = _mm256_min_pd(_mm256_set1_pd(709.78), _mm256_max_pd(_mm256_set1_pd(-708.39), x));
  const __m256d n = _mm256_round_pd(
      _mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-1), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);
  static constexpr double kInvFact[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
      1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
      1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
      1.0 / 24.0,         1.0 / 6.0,         0.5,
      1.0,                1.0};
  __m256d poly = _mm256_set1_pd(kInvFact[0]);
  for (std::size_t i = 1; i < std::size(kInvFact); ++i)
    poly = _mm256_fmadd_pd(poly, r, _mm256_set1_pd(kInvFact[i]));
  const __m256i bits = _mm256_castpd_si256(
      _mm256_add_pd(n, _mm256_set1_pd(6755399441055744.0)));
  const __m256i scale = _mm256_slli_epi64(
      _mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(poly, _mm256_castsi256_pd(scale));
}

inline __m256d sigmoid4(__m256d x) {
  const __m256d one = _mm256_set1_pd(1.0);
  return _mm256_div_pd(one, _mm256_add_pd(one, exp4(_mm256_sub_pd(_mm256_setzero_pd(), x))));
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
  }
  if (m == 0 || n == 0 || k == 0) return;

  PackBuffers& bufs = buffers();
  const std::size_t nc_max = std::min(n, kNc);
  const std::size_t kc_max = std::min(k, kKc);
  const std::size_t mc_max = std::min(m, kMc);
  // Grow only: shrinking and regrowing would re-zero the tail every call.
  const std::size_t need_b = ((nc_max + kNr - 1) / kNr) * kNr * kc_max;
  const std::size_t need_a = ((mc_max + kMr - 1) / kMr) * kMr * kc_max;
  if (bufs.b.size() < need_b) bufs.b.resize(need_b);
  if (bufs.a.size() < need_a) bufs.a.resize(need_a);
  alignas(32) double tile[kMr * kNr];

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(trans_b, b, ldb, pc, jc, kc, nc, bufs.b.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(trans_a, a, lda, ic, pc, mc, kc, bufs.a.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const std::size_t cols = std::min(kNr, nc - jr);
          const double* bp = bufs.b.data() + (jr / kNr) * kNr * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const std::size_t rows = std::min(kMr, mc - ir);
            const double* ap = bufs.a.data() + (ir / kMr) * kMr * kc;
            double* cdst = c + (ic + ir) * ldc + jc + jr;
            if (rows == kMr && cols == kNr) {
              micro_kernel(kc, ap, bp, cdst, ldc);
            } else {
              std::fill_n(tile, kMr * kNr, 0.0);
              micro_kernel(kc, ap, bp, tile, kNr);
              for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t q = 0; q < cols; ++q)
                  cdst[r * ldc + q] += tile[r * kNr + q];
            }
          }
        }
      }
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                         _mm256_loadu_pd(y + i + 4), s1);
  }
  s0 = _mm256_add_pd(s0, s1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, s0);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                               _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void exp(std::size_t n, const double* x, double* y) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::exp(x[i]);
}

void sigmoid(std::size_t n, const double* x, double* y) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, sigmoid4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

// tanh(x) = 2 sigmoid(2x) - 1
void tanh(std::size_t n, const double* x, double* y) {
  const __m256d two = _mm256_set1_pd(2.0), one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d s = sigmoid4(_mm256_mul_pd(two, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, _mm256_fmsub_pd(two, s, one));
  }
  for (; i < n; ++i) y[i] = std::tanh(x[i]);
}

}  // namespace dbt::kernels::avx2
