#include "lightbsr/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#endif

namespace lightbsr::kernels {

namespace scalar {

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {

__attribute__((target("avx2,fma"))) void axpy(double alpha, const double* x,
                                              double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    __m256d y1 = _mm256_loadu_pd(y + i + 4);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), y1);
    _mm256_storeu_pd(y + i, y0);
    _mm256_storeu_pd(y + i + 4, y1);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

__attribute__((target("avx2,fma"))) double dot(const double* a, const double* b,
                                               std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace avx2

static bool cpu_has_avx2() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

const axpy_fn axpy = cpu_has_avx2() ? avx2::axpy : scalar::axpy;
const dot_fn dot = cpu_has_avx2() ? avx2::dot : scalar::dot;

const char* active_backend() { return cpu_has_avx2() ? "avx2" : "scalar"; }

#else

const axpy_fn axpy = scalar::axpy;
const dot_fn dot = scalar::dot;
const char* active_backend() { return "scalar"; }

#endif

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av != 0.0) axpy(av, b + p * n, crow, n);
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += dot(arow, b + j * k, k);
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av != 0.0) axpy(av, brow, c + p * n, n);
    }
  }
}

}  // namespace lightbsr::kernels
