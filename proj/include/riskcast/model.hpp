#pragma once
#include <cstdint>
#include <cstddef>

#include "riskcast/graph.hpp"
#include "riskcast/spline.hpp"
#include "riskcast/tape.hpp"
#include "riskcast/tensor.hpp"

// Full model assembly: input KAN lift, L spatio-temporal encoder layers,
// prediction head, fusion gates, autoencoder, bilinear head, and the
// discrepancy direction. Parameters live in a ParamStore under fixed
// names; insertion order is the optimizer and checkpoint order, and each
// parameter draws its init from its own substream (seed, Init, ordinal).
namespace riskcast {

struct ModelConfig {
  std::size_t d_model = 16;
  std::size_t d_state = 4;
  std::size_t conv_width = 3;
  std::size_t layers = 2;
  int spline_degree = 3;
  int basis_count = 6;
  std::size_t clusters = 4;  // k of the cluster indicator
  std::size_t d_lat() const { return d_model / 2; }
  std::size_t d_hidden() const { return d_model / 2; }
};

void validate_model_config(const ModelConfig& cfg);

// Registers every trainable tensor of the model into ps.
void init_model_params(ParamStore& ps, const ModelConfig& cfg, std::size_t d_feat,
                       std::uint64_t seed);

struct ModelVars {
  EncoderVars enc;
  ad::Var head_w1, head_b1, head_w2, head_b2;
  ad::Var fuse_w1, fuse_w2;
  ad::Var ae_enc, ae_benc, ae_dec, ae_bdec;
  ad::Var ssl_wb;
  ad::Var disc_w0;
};

// Trainable binding (leaves feed gradient harvest) and read-only binding.
ModelVars bind_model(ad::Tape& tape, ad::LeafSet& leaves, ParamStore& ps,
                     const ModelConfig& cfg);
ModelVars leaf_model(ad::Tape& tape, ParamStore& ps, const ModelConfig& cfg);

// 2-layer MLP d_model -> d_model/2 -> 1 with SiLU hidden activation,
// applied per row of m ((batch*N) x D); returns a {batch*N} vector.
ad::Var predict_head(ad::Var m, const ModelVars& v);

}  // namespace riskcast
