#pragma once

#include <cstddef>
#include <cstdint>

// Hot arithmetic inner loops shared across the library. Each kernel has a
// scalar reference implementation and, on x86-64, an AVX2/FMA variant; the
// active backend is picked at runtime from CPU capabilities and can be
// overridden with the BGLD_KERNEL environment variable (scalar|avx2).
// SIMD reductions reorder sums, so backends may differ by a few ulp;
// tests/test_kernels.cpp pins the allowed divergence.

namespace bgld::kern {

enum class Backend { scalar, avx2 };

Backend active_backend();
bool set_backend(Backend b);  // false if unsupported on this machine
const char* backend_name(Backend b);
bool avx2_supported();

double dot(const double* x, const double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
double sum_sq_diff(const double* x, const double* y, std::size_t n);
// y += a * x
void axpy(double a, const double* x, double* y, std::size_t n);
// out = x - y
void subtract(const double* x, const double* y, double* out, std::size_t n);
// acc += w * x[i]^2
void sq_weight_accum(double w, const double* x, double* acc, std::size_t n);
// out[i] = sum_{k<4} w[4i+k] * src[idx[4i+k]]  (bilinear stencils)
void stencil4_apply(const std::int32_t* idx, const double* w, std::size_t npix,
                    const double* src, double* out);

namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
double sum_sq_diff(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void subtract(const double* x, const double* y, double* out, std::size_t n);
void sq_weight_accum(double w, const double* x, double* acc, std::size_t n);
void stencil4_apply(const std::int32_t* idx, const double* w, std::size_t npix,
                    const double* src, double* out);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define BGLD_HAVE_AVX2_BACKEND 1
namespace avx2 {
double dot(const double* x, const double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
double sum_sq_diff(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void subtract(const double* x, const double* y, double* out, std::size_t n);
void sq_weight_accum(double w, const double* x, double* acc, std::size_t n);
void stencil4_apply(const std::int32_t* idx, const double* w, std::size_t npix,
                    const double* src, double* out);
}  // namespace avx2
#endif

}  // namespace bgld::kern
