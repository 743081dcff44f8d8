#include "kernels_impl.hpp"

namespace riskcast::kernels {
namespace {

Backend& backend_slot() {
  static Backend b = simd_available() ? Backend::Simd : Backend::Scalar;
  return b;
}

}  // namespace

bool simd_available() {
#if defined(RISKCAST_HAVE_AVX2)
  return __builtin_cpu_supports("avx2") != 0;
#elif defined(RISKCAST_HAVE_NEON)
  return true;
#else
  return false;
#endif
}

const char* simd_name() {
#if defined(RISKCAST_HAVE_AVX2)
  return simd_available() ? "avx2" : "none";
#elif defined(RISKCAST_HAVE_NEON)
  return "neon";
#else
  return "none";
#endif
}

Backend active_backend() { return backend_slot(); }

void set_backend(Backend b) {
  if (b == Backend::Simd && !simd_available()) b = Backend::Scalar;
  backend_slot() = b;
}

const Ops& ops() {
  if (backend_slot() == Backend::Simd) {
#if defined(RISKCAST_HAVE_AVX2)
    return avx2_ops();
#elif defined(RISKCAST_HAVE_NEON)
    return neon_ops();
#endif
  }
  return scalar_ops();
}

void matmul_accum(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
  const Ops& o = ops();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      o.axpy(arow[kk], b + kk * n, crow, n);
    }
  }
}

}  // namespace riskcast::kernels
