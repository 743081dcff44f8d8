#include "kernels_impl.hpp"

#if defined(RISKCAST_HAVE_NEON)
#include <arm_neon.h>

namespace riskcast::kernels {
namespace {

// vmulq + vaddq, never vfmaq: rounding must match the scalar backend.

void add_k(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(dst + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub_k(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(dst + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul_k(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(dst + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void scale_k(const double* a, double s, double* dst, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(dst + i, vmulq_f64(vld1q_f64(a + i), vs));
  }
  for (; i < n; ++i) dst[i] = a[i] * s;
}

void axpy_k(double s, const double* x, double* dst, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t vd = vld1q_f64(dst + i);
    vd = vaddq_f64(vd, vmulq_f64(vs, vld1q_f64(x + i)));
    vst1q_f64(dst + i, vd);
  }
  for (; i < n; ++i) dst[i] += s * x[i];
}

}  // namespace

const Ops& neon_ops() {
  static const Ops o{add_k, sub_k, mul_k, scale_k, axpy_k};
  return o;
}

}  // namespace riskcast::kernels
#endif
