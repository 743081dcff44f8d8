#pragma once
#include <memory>
#include <vector>

#include "riskcast/ssm.hpp"

// Spatial encoding over the region graph.
//
// normalize_adjacency computes Ahat = Dt^(-1/2) (A + I) Dt^(-1/2) where Dt
// is the degree matrix of A + I. The result is built mirror-symmetric so
// Ahat equals its transpose bitwise.
//
// The spatio-temporal encoder interleaves temporal blocks with per-slot
// graph convolutions: an input KAN lifts raw features to model width, then
// each of L layers runs temporal block, GCN, temporal block. The readout
// takes the final slot of each sequence.
namespace riskcast {

// 4-neighborhood grid adjacency, zero diagonal, symmetric 0/1.
Tensor grid_adjacency(std::size_t rows, std::size_t cols);

// A must be square, symmetric, zero-diagonal, nonnegative.
Tensor normalize_adjacency(const Tensor& a);

// Per (window, slot) block multiply: out_block = hats[w] * H_block where
// H_block is the N x D slice of slot t in window w. hats holds one
// normalized adjacency per window (size 1 broadcasts to all windows).
ad::Var graph_mix(ad::Var h, std::shared_ptr<std::vector<Tensor>> hats, SeqMeta meta);

// relu(Ahat H W) per slot.
ad::Var gcn_layer(ad::Var h, ad::Var w, std::shared_ptr<std::vector<Tensor>> hats,
                  SeqMeta meta);

struct EncoderLayerVars {
  EkambaBlockVars block_a;
  ad::Var gcn_w;
  EkambaBlockVars block_b;
};

struct EncoderVars {
  ad::Var in_wb, in_ws, in_b;  // input KAN, d_feat -> d_model
  std::vector<EncoderLayerVars> layers;
};

struct EncoderOut {
  ad::Var M;     // (batch * N) x D, final-slot readout
  ad::Var C;     // (batch * T * N) x D, first temporal block output
  ad::Var Hseq;  // (batch * T * N) x D, pre-readout sequence
};

EncoderOut st_encode(ad::Var x, const EncoderVars& v, const SplineGrid& grid,
                     std::shared_ptr<std::vector<Tensor>> hats, SeqMeta meta);

}  // namespace riskcast
