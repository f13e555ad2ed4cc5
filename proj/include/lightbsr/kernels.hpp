#pragma once

// Low-level arithmetic kernels used by the convolution / matmul paths.
// Scalar reference implementations always exist; on x86 an AVX2+FMA
// variant is selected at runtime when the CPU supports it.

#include <cstddef>

namespace lightbsr::kernels {

// y[i] += alpha * x[i]
using axpy_fn = void (*)(double alpha, const double* x, double* y, std::size_t n);
// sum_i a[i] * b[i]
using dot_fn = double (*)(const double* a, const double* b, std::size_t n);

namespace scalar {
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
}  // namespace avx2
#endif

// Dispatched entry points (function pointers resolved once at startup).
extern const axpy_fn axpy;
extern const dot_fn dot;

// Name of the backend the dispatcher picked ("scalar" or "avx2").
const char* active_backend();

// C[M x N] += A[M x K] * B[K x N], row-major, leading dims = row lengths.
// Built on axpy so it uses whichever backend is active.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c);

// C[M x N] += A[M x K] * B[N x K]^T (B stored row-major as N rows of K).
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c);

// C[K x N] += A[M x K]^T * B[M x N].
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c);

}  // namespace lightbsr::kernels
