// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/kernels.hpp"

#include <atomic>

#include "dbt/error.hpp"

namespace dbt {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kUnsupported: return "unsupported";
  }
  return "unknown";
}

namespace kernels {
namespace {

Backend detect() {
  return avx2_supported() ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool ok =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (backend == Backend::kAvx2 && !avx2_supported())
    fail(ErrorCode::kUnsupported, "AVX2/FMA not available on this CPU");
  current().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

ScopedBackend::ScopedBackend(Backend backend) : saved_(active_backend()) {
  set_backend(backend);
}

ScopedBackend::~ScopedBackend() { current().store(saved_); }

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  if (active_backend() == Backend::kAvx2)
    avx2::gemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  else
    scalar::gemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc,
                 accumulate);
}

double dot(const double* x, const double* y, std::size_t n) {
  return active_backend() == Backend::kAvx2 ? avx2::dot(x, y, n)
                                            : scalar::dot(x, y, n);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  if (active_backend() == Backend::kAvx2)
    avx2::axpy(n, alpha, x, y);
  else
    scalar::axpy(n, alpha, x, y);
}

#define DBT_DISPATCH_UNARY(name)                                  \
  void name(std::size_t n, const double* x, double* y) {          \
    if (active_backend() == Backend::kAvx2)                       \
      avx2::name(n, x, y);                                        \
    else                                                          \
      scalar::name(n, x, y);                                      \
  }
DBT_DISPATCH_UNARY(exp)
DBT_DISPATCH_UNARY(sigmoid)
DBT_DISPATCH_UNARY(tanh)
#undef DBT_DISPATCH_UNARY

}  // namespace kernels
}  // namespace dbt
