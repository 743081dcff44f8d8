#include <doctest.h>

#include <cstring>
#include <string>
#include <vector>

#include "riskcast/kernels.hpp"
#include "riskcast/rng.hpp"

using namespace riskcast;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-3.0, 3.0);
  return v;
}

struct BackendGuard {
  kernels::Backend saved;
  BackendGuard() : saved(kernels::active_backend()) {}
  ~BackendGuard() { kernels::set_backend(saved); }
};

}  // namespace

TEST_CASE("elementwise kernels match bitwise across backends") {
  BackendGuard guard;
  if (!kernels::simd_available()) {
    kernels::set_backend(kernels::Backend::Simd);
    CHECK(kernels::active_backend() == kernels::Backend::Scalar);
    return;
  }
  // Odd length exercises the SIMD tail path.
  for (std::size_t n : {1u, 4u, 7u, 64u, 257u}) {
    auto a = random_vec(n, 11 + n);
    auto b = random_vec(n, 23 + n);
    std::vector<double> r_scalar(n), r_simd(n);

    struct Case {
      void (*run)(const double*, const double*, double*, std::size_t);
    };
    kernels::set_backend(kernels::Backend::Scalar);
    const kernels::Ops& so = kernels::ops();
    kernels::set_backend(kernels::Backend::Simd);
    const kernels::Ops& vo = kernels::ops();

    so.add(a.data(), b.data(), r_scalar.data(), n);
    vo.add(a.data(), b.data(), r_simd.data(), n);
    CHECK(std::memcmp(r_scalar.data(), r_simd.data(), n * sizeof(double)) == 0);

    so.sub(a.data(), b.data(), r_scalar.data(), n);
    vo.sub(a.data(), b.data(), r_simd.data(), n);
    CHECK(std::memcmp(r_scalar.data(), r_simd.data(), n * sizeof(double)) == 0);

    so.mul(a.data(), b.data(), r_scalar.data(), n);
    vo.mul(a.data(), b.data(), r_simd.data(), n);
    CHECK(std::memcmp(r_scalar.data(), r_simd.data(), n * sizeof(double)) == 0);

    so.scale(a.data(), 1.7, r_scalar.data(), n);
    vo.scale(a.data(), 1.7, r_simd.data(), n);
    CHECK(std::memcmp(r_scalar.data(), r_simd.data(), n * sizeof(double)) == 0);

    r_scalar = b;
    r_simd = b;
    so.axpy(0.37, a.data(), r_scalar.data(), n);
    vo.axpy(0.37, a.data(), r_simd.data(), n);
    CHECK(std::memcmp(r_scalar.data(), r_simd.data(), n * sizeof(double)) == 0);
  }
}

TEST_CASE("matmul matches a reference triple loop bitwise") {
  BackendGuard guard;
  const std::size_t m = 9, k = 13, n = 21;
  auto a = random_vec(m * k, 5);
  auto b = random_vec(k * n, 6);

  // k-ascending accumulation, the documented reduction order.
  std::vector<double> ref(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      ref[i * n + j] = acc;
    }
  }

  kernels::set_backend(kernels::Backend::Scalar);
  std::vector<double> out_scalar(m * n, 0.0);
  kernels::matmul_accum(a.data(), b.data(), out_scalar.data(), m, k, n);
  CHECK(std::memcmp(ref.data(), out_scalar.data(), m * n * sizeof(double)) == 0);

  if (kernels::simd_available()) {
    kernels::set_backend(kernels::Backend::Simd);
    std::vector<double> out_simd(m * n, 0.0);
    kernels::matmul_accum(a.data(), b.data(), out_simd.data(), m, k, n);
    CHECK(std::memcmp(ref.data(), out_simd.data(), m * n * sizeof(double)) == 0);
  }
}

TEST_CASE("backend selection reports consistently") {
  BackendGuard guard;
  kernels::set_backend(kernels::Backend::Scalar);
  CHECK(kernels::active_backend() == kernels::Backend::Scalar);
  if (kernels::simd_available()) {
    kernels::set_backend(kernels::Backend::Simd);
    CHECK(kernels::active_backend() == kernels::Backend::Simd);
    CHECK(std::string(kernels::simd_name()) != "none");
  }
}
