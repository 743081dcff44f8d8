#pragma once
#include <vector>

#include "riskcast/rng.hpp"
#include "riskcast/spline.hpp"
#include "riskcast/tape.hpp"
#include "riskcast/tensor.hpp"

// Kolmogorov-Arnold layers over a shared B-spline basis.
//
// The efficient layer expands each input once into K basis values and mixes
// them with a single weight matrix:
//   y = silu(x) . w_base + E(x) . w_spline + bias
// The naive variant keeps one spline per (input, output) edge and evaluates
// every edge independently. Both compute the same function; with matching
// accumulation order their outputs are bitwise identical, which the
// benchmark asserts before timing.
//
// Weight layout is input-major: w_base is d_in x d_out and w_spline is
// (d_in * K) x d_out, with the K coefficients of input i on rows i*K..i*K+K-1.
namespace riskcast {

struct KanLayer {
  Tensor w_base;    // d_in x d_out
  Tensor w_spline;  // (d_in * K) x d_out
  Tensor bias;      // d_out
};

struct KanStack {
  SplineGrid grid;
  std::vector<KanLayer> layers;
};

// Validates weight shapes against the grid and the dim chain between layers.
void validate_stack(const KanStack& s);

std::size_t kan_in_dim(const KanStack& s);
std::size_t kan_out_dim(const KanStack& s);

// Tape forward through one layer.
ad::Var ekan_layer(ad::Var x, ad::Var w_base, ad::Var w_spline, ad::Var bias,
                   const SplineGrid& grid);

// Plain-tensor forward through a stack.
Tensor ekan_forward(const KanStack& s, const Tensor& x);

// Per-edge reference implementation. Materializes the (d_out x d_in*K)
// edge intermediate for one sample at a time and re-evaluates basis and
// silu per edge.
Tensor naive_kan_forward(const KanStack& s, const Tensor& x);

// Tape node for the naive layer. Used by the benchmark only; backward
// recomputes per-edge values.
ad::Var naive_kan_layer(ad::Var x, ad::Var w_base, ad::Var w_spline, ad::Var bias,
                        const SplineGrid& grid);

// Xavier-uniform weights for one layer; basis coefficients get a smaller
// scale so initial spline output is modest.
KanLayer init_kan_layer(std::size_t d_in, std::size_t d_out, const SplineGrid& grid,
                        SplitMix64& rng);

}  // namespace riskcast
