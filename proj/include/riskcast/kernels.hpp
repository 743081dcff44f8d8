#pragma once
#include <cstddef>

// Dispatchable dense float64 kernels.
//
// Every backend performs the same IEEE-754 operations in the same order:
// no fused multiply-add, tail elements handled one at a time, reductions
// run ascending by index. Scalar and SIMD results are therefore bitwise
// identical, and the active backend is a pure speed knob.
//
// Not thread safe: the active backend is a process-wide setting.
namespace riskcast::kernels {

enum class Backend { Scalar, Simd };

// True when a SIMD backend was compiled in and the CPU supports it.
bool simd_available();

// "avx2", "neon", or "none".
const char* simd_name();

Backend active_backend();

// Selecting Simd when unavailable silently keeps Scalar.
void set_backend(Backend b);

struct Ops {
  void (*add)(const double* a, const double* b, double* dst, std::size_t n);
  void (*sub)(const double* a, const double* b, double* dst, std::size_t n);
  void (*mul)(const double* a, const double* b, double* dst, std::size_t n);
  void (*scale)(const double* a, double s, double* dst, std::size_t n);
  // dst[i] += s * x[i], one multiply and one add per element.
  void (*axpy)(double s, const double* x, double* dst, std::size_t n);
};

const Ops& ops();

// C (m x n, row-major) += A (m x k) * B (k x n).
// Each output element accumulates k-ascending regardless of backend.
void matmul_accum(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n);

}  // namespace riskcast::kernels
