#pragma once
#include <vector>

#include "riskcast/tape.hpp"
#include "riskcast/tensor.hpp"

// Uniform B-spline basis on [-1, 1].
//
// A grid of degree p with K basis functions uses K+p+1 uniform knots
// t_j = -1 + (j - p) * h with h = 2 / (K - p), so the domain [-1, 1] equals
// [t_p, t_K] and the basis sums to one everywhere on it. Inputs outside the
// domain are clamped to the boundary; their derivative is zero.
namespace riskcast {

struct SplineGrid {
  int degree = 3;
  int basis_count = 8;
  std::vector<double> knots;
};

// Requires degree >= 0 and basis_count >= degree + 1.
SplineGrid make_spline_grid(int degree, int basis_count);

// Writes all basis_count values at x. Out must hold basis_count doubles.
void spline_basis(const SplineGrid& g, double x, double* out);

// Values and derivatives together. d_out is zero outside [-1, 1].
void spline_basis_deriv(const SplineGrid& g, double x, double* out, double* d_out);

// x: m x d rows -> m x (d * K). Column block i*K..i*K+K-1 holds the basis
// expansion of feature i.
ad::Var spline_expand(ad::Var x, const SplineGrid& g);

// Plain-tensor variant of the same expansion.
Tensor spline_expand_value(const Tensor& x, const SplineGrid& g);

}  // namespace riskcast
