#include "kernels_impl.hpp"

#if defined(RISKCAST_HAVE_AVX2)
#include <immintrin.h>

namespace riskcast::kernels {
namespace {

// Separate mul and add throughout. An FMA would round once instead of twice
// and diverge from the scalar backend.

void add_k(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub_k(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul_k(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void scale_k(const double* a, double s, double* dst, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  }
  for (; i < n; ++i) dst[i] = a[i] * s;
}

void axpy_k(double s, const double* x, double* dst, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vd = _mm256_loadu_pd(dst + i);
    vd = _mm256_add_pd(vd, _mm256_mul_pd(vs, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(dst + i, vd);
  }
  for (; i < n; ++i) dst[i] += s * x[i];
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops o{add_k, sub_k, mul_k, scale_k, axpy_k};
  return o;
}

}  // namespace riskcast::kernels
#endif
