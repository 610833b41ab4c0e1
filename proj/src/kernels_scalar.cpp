#include "bgld/kernels.hpp"

// Reference kernels. Plain sequential loops; these define the semantics the
// SIMD variants are tested against.

namespace bgld::kern::scalar {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sumsq(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

double sum_sq_diff(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void subtract(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void sq_weight_accum(double w, const double* x, double* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += w * x[i] * x[i];
}

void stencil4_apply(const std::int32_t* idx, const double* w, std::size_t npix,
                    const double* src, double* out) {
  for (std::size_t p = 0; p < npix; ++p) {
    const std::int32_t* ip = idx + 4 * p;
    const double* wp = w + 4 * p;
    out[p] = wp[0] * src[ip[0]] + wp[1] * src[ip[1]] + wp[2] * src[ip[2]] +
             wp[3] * src[ip[3]];
  }
}

}  // namespace bgld::kern::scalar
