#include "riskcast/spline.hpp"

#include <algorithm>
#include <cmath>

namespace riskcast {
namespace {

double clamp_domain(double x) { return std::min(1.0, std::max(-1.0, x)); }

// Span index i with t_i <= x < t_{i+1}, restricted to [p, K-1] so x = 1
// falls into the last interior span.
int find_span(const SplineGrid& g, double x) {
  const int p = g.degree, K = g.basis_count;
  if (x >= g.knots[K]) return K - 1;
  if (x <= g.knots[p]) return p;
  int lo = p, hi = K - 1;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (g.knots[mid] <= x) lo = mid;
    else hi = mid - 1;
  }
  return lo;
}

// Cox-de Boor triangle: N[j] = B_{span-p+j, deg}(x) for j = 0..deg.
void nonzero_basis(const SplineGrid& g, int span, double x, int deg, double* N) {
  N[0] = 1.0;
  std::vector<double> left(deg + 1), right(deg + 1);
  for (int j = 1; j <= deg; ++j) {
    left[j] = x - g.knots[span + 1 - j];
    right[j] = g.knots[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      double tmp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    N[j] = saved;
  }
}

}  // namespace

SplineGrid make_spline_grid(int degree, int basis_count) {
  require(degree >= 0, "spline degree must be nonnegative");
  require(basis_count >= degree + 1, "spline basis count must be at least degree + 1");
  SplineGrid g;
  g.degree = degree;
  g.basis_count = basis_count;
  const double h = 2.0 / static_cast<double>(basis_count - degree);
  g.knots.resize(basis_count + degree + 1);
  for (int j = 0; j < static_cast<int>(g.knots.size()); ++j) {
    g.knots[j] = -1.0 + (j - degree) * h;
  }
  return g;
}

void spline_basis(const SplineGrid& g, double x, double* out) {
  const int p = g.degree, K = g.basis_count;
  std::fill(out, out + K, 0.0);
  x = clamp_domain(x);
  const int span = find_span(g, x);
  std::vector<double> N(p + 1);
  nonzero_basis(g, span, x, p, N.data());
  for (int j = 0; j <= p; ++j) out[span - p + j] = N[j];
}

void spline_basis_deriv(const SplineGrid& g, double x, double* out, double* d_out) {
  const int p = g.degree, K = g.basis_count;
  std::fill(out, out + K, 0.0);
  std::fill(d_out, d_out + K, 0.0);
  const bool clamped = x < -1.0 || x > 1.0;
  x = clamp_domain(x);
  const int span = find_span(g, x);
  std::vector<double> N(p + 1);
  nonzero_basis(g, span, x, p, N.data());
  for (int j = 0; j <= p; ++j) out[span - p + j] = N[j];
  if (p == 0 || clamped) return;

  // B'_{j,p} = p * (B_{j,p-1}/(t_{j+p}-t_j) - B_{j+1,p-1}/(t_{j+p+1}-t_{j+1}))
  std::vector<double> Nl(p);
  nonzero_basis(g, span, x, p - 1, Nl.data());
  auto lower = [&](int j) -> double {
    // B_{j,p-1} is nonzero only for j in [span-p+1, span].
    int off = j - (span - p + 1);
    if (off < 0 || off >= p) return 0.0;
    return Nl[off];
  };
  for (int idx = 0; idx <= p; ++idx) {
    int j = span - p + idx;
    double a = lower(j) / (g.knots[j + p] - g.knots[j]);
    double b = lower(j + 1) / (g.knots[j + p + 1] - g.knots[j + 1]);
    d_out[j] = p * (a - b);
  }
}

Tensor spline_expand_value(const Tensor& x, const SplineGrid& g) {
  require(x.rank() == 2, "spline_expand expects rank 2 input");
  const std::size_t m = x.dim(0), d = x.dim(1);
  const std::size_t K = static_cast<std::size_t>(g.basis_count);
  Tensor out({m, d * K});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      spline_basis(g, x.at2(r, i), out.data() + (r * d + i) * K);
    }
  }
  return out;
}

ad::Var spline_expand(ad::Var x, const SplineGrid& g) {
  Tensor out = spline_expand_value(x.value(), g);
  const std::size_t m = x.value().dim(0), d = x.value().dim(1);
  const std::size_t K = static_cast<std::size_t>(g.basis_count);
  ad::Tape* t = x.tape();
  int ix = x.index();
  int io = t->add_node(std::move(out), t->node(ix).needs_grad, nullptr);
  t->node(io).back = [ix, io, g, m, d, K](ad::Tape& tp) {
    Tensor* gx = tp.grad_if(ix);
    if (!gx) return;
    const Tensor& go = tp.node(io).grad;
    const Tensor& xv = tp.node(ix).value;
    std::vector<double> B(K), dB(K);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t i = 0; i < d; ++i) {
        spline_basis_deriv(g, xv.at2(r, i), B.data(), dB.data());
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          acc += go.at((r * d + i) * K + k) * dB[k];
        }
        gx->at(r * d + i) += acc;
      }
    }
  };
  return ad::Var(t, io);
}

}  // namespace riskcast
