// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Dense arithmetic kernels behind every tensor op. Two implementations exist:
// a portable scalar reference and an AVX2/FMA variant. The active backend is
// chosen once at startup from CPUID and can be overridden for testing.

#pragma once

#include <cstddef>
#include <string_view>

namespace dbt::kernels {

enum class Backend { kScalar, kAvx2 };

bool avx2_supported();
Backend active_backend();
// Throws dbt::Error when the requested backend is not supported by the CPU.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);

// RAII override of the active backend.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend);
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

// C[m x n] = op(A)[m x k] * op(B)[k x n] (+ C when accumulate).
// Row-major with explicit leading dimensions; op(X) = X^T when trans_x.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double* c, std::size_t ldc, bool accumulate);

double dot(const double* x, const double* y, std::size_t n);

// y += alpha * x
void axpy(std::size_t n, double alpha, const double* x, double* y);

// Elementwise transcendental maps; x and y may alias.
void exp(std::size_t n, const double* x, double* y);
void sigmoid(std::size_t n, const double* x, double* y);
void tanh(std::size_t n, const double* x, double* y);

namespace scalar {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void exp(std::size_t n, const double* x, double* y);
void sigmoid(std::size_t n, const double* x, double* y);
void tanh(std::size_t n, const double* x, double* y);
}  // namespace scalar

namespace avx2 {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void exp(std::size_t n, const double* x, double* y);
void sigmoid(std::size_t n, const double* x, double* y);
void tanh(std::size_t n, const double* x, double* y);
}  // namespace avx2

}  // namespace dbt::kernels
