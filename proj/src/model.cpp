#include "riskcast/model.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "riskcast/rng.hpp"

namespace riskcast {
namespace {

Tensor uniform_tensor(SplitMix64& rng, std::vector<std::size_t> shape, double span) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-span, span);
  return t;
}

double xavier_span(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Registration and initialization in one place: the ordinal doubles as the
// Init substream index, so any parameter can be re-derived in isolation.
class Registrar {
 public:
  Registrar(ParamStore& ps, std::uint64_t seed) : ps_(ps), seed_(seed) {}

  void xavier(const std::string& name, std::size_t rows, std::size_t cols) {
    SplitMix64 rng = stream();
    ps_.add(name, uniform_tensor(rng, {rows, cols}, xavier_span(rows, cols)));
  }
  void spline_weights(const std::string& name, std::size_t d_in, std::size_t k,
                      std::size_t d_out) {
    SplitMix64 rng = stream();
    ps_.add(name, uniform_tensor(rng, {d_in * k, d_out},
                                 0.5 * xavier_span(d_in * k, d_out)));
  }
  void uniform_vec(const std::string& name, std::size_t n, double span) {
    SplitMix64 rng = stream();
    ps_.add(name, uniform_tensor(rng, {n}, span));
  }
  void zeros(const std::string& name, std::vector<std::size_t> shape) {
    stream();  // keep ordinals aligned even for deterministic params
    ps_.add(name, Tensor(std::move(shape)));
  }
  void constant(const std::string& name, std::vector<std::size_t> shape, double v) {
    stream();
    Tensor t(std::move(shape));
    t.fill(v);
    ps_.add(name, t);
  }
  // Causal conv kernels start near identity: last row 1, others small.
  void conv_kernels(const std::string& name, std::size_t width, std::size_t d) {
    SplitMix64 rng = stream();
    Tensor t = uniform_tensor(rng, {width, d}, 0.1);
    for (std::size_t c = 0; c < d; ++c) t.at2(width - 1, c) += 1.0;
    ps_.add(name, t);
  }
  // Diagonal state decays -(1..d_state) per model channel.
  void state_matrix(const std::string& name, std::size_t d, std::size_t d_state) {
    stream();
    Tensor t({d, d_state});
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t s = 0; s < d_state; ++s)
        t.at2(i, s) = -static_cast<double>(s + 1);
    ps_.add(name, t);
  }

 private:
  SplitMix64 stream() { return substream(seed_, StreamTag::Init, ps_.size()); }
  ParamStore& ps_;
  std::uint64_t seed_;
};

void register_block(Registrar& reg, const std::string& prefix, const ModelConfig& cfg) {
  const std::size_t d = cfg.d_model, ds = cfg.d_state;
  const std::size_t k = static_cast<std::size_t>(cfg.basis_count);
  reg.conv_kernels(prefix + ".conv", cfg.conv_width, d);
  reg.xavier(prefix + ".wd", d, d);
  reg.zeros(prefix + ".bd", {d});
  reg.xavier(prefix + ".wbp", d, ds);
  reg.xavier(prefix + ".wcp", d, ds);
  reg.state_matrix(prefix + ".A", d, ds);
  reg.constant(prefix + ".D", {d}, 1.0);
  reg.xavier(prefix + ".kwb", d, d);
  reg.spline_weights(prefix + ".kws", d, k, d);
  reg.zeros(prefix + ".kb", {d});
}

using Binder = std::function<ad::Var(Param&)>;

EkambaBlockVars make_block_vars(ParamStore& ps, const std::string& prefix,
                                const Binder& mk) {
  EkambaBlockVars v;
  v.conv_k = mk(ps.get(prefix + ".conv"));
  v.w_delta = mk(ps.get(prefix + ".wd"));
  v.b_delta = mk(ps.get(prefix + ".bd"));
  v.w_b = mk(ps.get(prefix + ".wbp"));
  v.w_c = mk(ps.get(prefix + ".wcp"));
  v.A = mk(ps.get(prefix + ".A"));
  v.D = mk(ps.get(prefix + ".D"));
  v.kan_wb = mk(ps.get(prefix + ".kwb"));
  v.kan_ws = mk(ps.get(prefix + ".kws"));
  v.kan_b = mk(ps.get(prefix + ".kb"));
  return v;
}

ModelVars make_model_vars(ParamStore& ps, const ModelConfig& cfg, const Binder& mk) {
  ModelVars v;
  v.enc.in_wb = mk(ps.get("in.wb"));
  v.enc.in_ws = mk(ps.get("in.ws"));
  v.enc.in_b = mk(ps.get("in.b"));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "L" + std::to_string(l);
    EncoderLayerVars lay;
    lay.block_a = make_block_vars(ps, p + ".a", mk);
    lay.gcn_w = mk(ps.get(p + ".gcn"));
    lay.block_b = make_block_vars(ps, p + ".b", mk);
    v.enc.layers.push_back(lay);
  }
  v.head_w1 = mk(ps.get("head.w1"));
  v.head_b1 = mk(ps.get("head.b1"));
  v.head_w2 = mk(ps.get("head.w2"));
  v.head_b2 = mk(ps.get("head.b2"));
  v.fuse_w1 = mk(ps.get("fuse.w1"));
  v.fuse_w2 = mk(ps.get("fuse.w2"));
  v.ae_enc = mk(ps.get("ae.enc"));
  v.ae_benc = mk(ps.get("ae.benc"));
  v.ae_dec = mk(ps.get("ae.dec"));
  v.ae_bdec = mk(ps.get("ae.bdec"));
  v.ssl_wb = mk(ps.get("ssl.wb"));
  v.disc_w0 = mk(ps.get("disc.w0"));
  return v;
}

}  // namespace

void validate_model_config(const ModelConfig& cfg) {
  require(cfg.d_model >= 2, "d_model must be at least 2");
  require(cfg.d_state >= 1, "d_state must be at least 1");
  require(cfg.conv_width >= 1, "conv_width must be at least 1");
  require(cfg.layers >= 1, "need at least one encoder layer");
  require(cfg.spline_degree >= 0, "spline degree must be non-negative");
  require(cfg.basis_count >= cfg.spline_degree + 1,
          "basis_count must be at least degree + 1");
  require(cfg.clusters >= 1, "clusters must be at least 1");
}

void init_model_params(ParamStore& ps, const ModelConfig& cfg, std::size_t d_feat,
                       std::uint64_t seed) {
  validate_model_config(cfg);
  require(d_feat >= 1, "need at least one input channel");
  require(ps.size() == 0, "init_model_params expects an empty store");
  const std::size_t d = cfg.d_model;
  const std::size_t k = static_cast<std::size_t>(cfg.basis_count);
  Registrar reg(ps, seed);

  reg.xavier("in.wb", d_feat, d);
  reg.spline_weights("in.ws", d_feat, k, d);
  reg.zeros("in.b", {d});
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "L" + std::to_string(l);
    register_block(reg, p + ".a", cfg);
    reg.xavier(p + ".gcn", d, d);
    register_block(reg, p + ".b", cfg);
  }
  reg.xavier("head.w1", d, cfg.d_hidden());
  reg.zeros("head.b1", {cfg.d_hidden()});
  reg.xavier("head.w2", cfg.d_hidden(), 1);
  reg.zeros("head.b2", {1});
  reg.constant("fuse.w1", {d}, 0.5);
  reg.constant("fuse.w2", {d}, 0.5);
  reg.xavier("ae.enc", d, cfg.d_lat());
  reg.zeros("ae.benc", {cfg.d_lat()});
  reg.xavier("ae.dec", cfg.d_lat(), d);
  reg.zeros("ae.bdec", {d});
  reg.xavier("ssl.wb", d, d);
  reg.uniform_vec("disc.w0", d, 1.0 / std::sqrt(static_cast<double>(d)));
}

ModelVars bind_model(ad::Tape& tape, ad::LeafSet& leaves, ParamStore& ps,
                     const ModelConfig& cfg) {
  return make_model_vars(ps, cfg, [&](Param& p) { return leaves.bind(tape, p); });
}

ModelVars leaf_model(ad::Tape& tape, ParamStore& ps, const ModelConfig& cfg) {
  return make_model_vars(ps, cfg, [&](Param& p) { return tape.leaf(p.value, false); });
}

ad::Var predict_head(ad::Var m, const ModelVars& v) {
  ad::Var h = ad::silu(ad::add_row(ad::matmul(m, v.head_w1), v.head_b1));
  ad::Var y = ad::add_row(ad::matmul(h, v.head_w2), v.head_b2);
  return ad::reshape(y, {y.value().dim(0)});
}

}  // namespace riskcast
