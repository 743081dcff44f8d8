#pragma once
#include <cstddef>

#include "riskcast/kan.hpp"
#include "riskcast/tape.hpp"
#include "riskcast/tensor.hpp"

// Selective state-space temporal block.
//
// Sequences live in batched row-major layout: a tensor of shape
// (batch * T * N) x d holds slot t of window w for region n at row
// (w * T + t) * N + n. SeqMeta carries (batch, T, N); temporal ops walk
// each (w, n) pair independently along t.
//
// The scan discretizes per step with zero-order hold on A and Euler on B:
//   abar = exp(delta * A), bbar = delta * B,
//   h_t = abar h_{t-1} + bbar u_t, y_t = C_t h_t + D u_t.
// A diagonal state matrix is stored per channel: A is d_model x d_state.
// delta = softplus(u W_delta + b_delta) keeps every step width positive,
// and A initialized to -(1..d_state) keeps |abar| <= 1, so long scans
// stay bounded.
namespace riskcast {

struct SeqMeta {
  std::size_t batch = 1;
  std::size_t T = 1;
  std::size_t N = 1;
  std::size_t rows() const { return batch * T * N; }
};

// Depthwise causal convolution. kernels: width x d_model, kernel row 0
// multiplies the oldest of the width inputs. Slots before the sequence
// start are zero.
ad::Var causal_conv1d(ad::Var x, ad::Var kernels, SeqMeta meta);

// Input-dependent scan parameters: delta = softplus(u W_delta + b_delta),
// B = u W_B, C = u W_C.
struct SsmProjections {
  ad::Var delta;  // rows x d_model
  ad::Var B;      // rows x d_state
  ad::Var C;      // rows x d_state
};
SsmProjections ssm_projections(ad::Var u, ad::Var w_delta, ad::Var b_delta, ad::Var w_b,
                               ad::Var w_c);

// y rows match u. u: rows x d_model, delta: rows x d_model,
// B,C: rows x d_state, A: d_model x d_state, D: d_model.
ad::Var ssm_scan(ad::Var u, ad::Var delta, ad::Var B, ad::Var C, ad::Var A, ad::Var D,
                 SeqMeta meta);

// Forward-only tree reduction over (decay, increment) pairs using the
// associative combine. Matches the sequential scan to tight tolerance.
Tensor ssm_scan_associative(const Tensor& u, const Tensor& delta, const Tensor& B,
                            const Tensor& C, const Tensor& A, const Tensor& D,
                            SeqMeta meta);

struct EkambaBlockVars {
  ad::Var conv_k;    // width x d_model
  ad::Var w_delta;   // d_model x d_model
  ad::Var b_delta;   // d_model
  ad::Var w_b;       // d_model x d_state
  ad::Var w_c;       // d_model x d_state
  ad::Var A;         // d_model x d_state
  ad::Var D;         // d_model
  ad::Var kan_wb;    // d_model x d_model
  ad::Var kan_ws;    // (d_model * K) x d_model
  ad::Var kan_b;     // d_model
};

// H = eKAN( silu(scan(conv(H'))) + silu(H') ), eKAN applied per row.
ad::Var ekamba_block(ad::Var h, const EkambaBlockVars& v, const SplineGrid& grid,
                     SeqMeta meta);

}  // namespace riskcast
