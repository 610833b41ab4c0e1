#include "bgld/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace bgld::kern {

bool avx2_supported() {
#if defined(BGLD_HAVE_AVX2_BACKEND) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Backend detect_backend() {
  if (const char* env = std::getenv("BGLD_KERNEL")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Backend::avx2;
  }
  return avx2_supported() ? Backend::avx2 : Backend::scalar;
}

Backend& backend_ref() {
  static Backend b = detect_backend();
  return b;
}

}  // namespace

Backend active_backend() { return backend_ref(); }

bool set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_supported()) return false;
  backend_ref() = b;
  return true;
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

#if defined(BGLD_HAVE_AVX2_BACKEND)
#define BGLD_DISPATCH(fn, ...)                          \
  (active_backend() == Backend::avx2 ? avx2::fn(__VA_ARGS__) \
                                     : scalar::fn(__VA_ARGS__))
#else
#define BGLD_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

double dot(const double* x, const double* y, std::size_t n) {
  return BGLD_DISPATCH(dot, x, y, n);
}
double sum(const double* x, std::size_t n) { return BGLD_DISPATCH(sum, x, n); }
double sumsq(const double* x, std::size_t n) { return BGLD_DISPATCH(sumsq, x, n); }
double sum_sq_diff(const double* x, const double* y, std::size_t n) {
  return BGLD_DISPATCH(sum_sq_diff, x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
  BGLD_DISPATCH(axpy, a, x, y, n);
}
void subtract(const double* x, const double* y, double* out, std::size_t n) {
  BGLD_DISPATCH(subtract, x, y, out, n);
}
void sq_weight_accum(double w, const double* x, double* acc, std::size_t n) {
  BGLD_DISPATCH(sq_weight_accum, w, x, acc, n);
}
void stencil4_apply(const std::int32_t* idx, const double* w, std::size_t npix,
                    const double* src, double* out) {
  BGLD_DISPATCH(stencil4_apply, idx, w, npix, src, out);
}

#undef BGLD_DISPATCH

}  // namespace bgld::kern
