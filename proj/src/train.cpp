#include "riskcast/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "riskcast/augment.hpp"
#include "riskcast/graph.hpp"
#include "riskcast/rng.hpp"
#include "riskcast/ssl.hpp"

namespace riskcast {
namespace {

using nlohmann::json;

// Batch/window ordinals are packed into one substream index so every
// (epoch, batch, window) triple owns an independent augmentation stream.
std::uint64_t augment_index(std::size_t epoch, std::size_t batch, std::size_t w) {
  return (static_cast<std::uint64_t>(epoch) << 24) |
         (static_cast<std::uint64_t>(batch) << 12) | static_cast<std::uint64_t>(w);
}

// Window w occupies contiguous rows [w*T*N, (w+1)*T*N) of a batched
// row-major matrix; returns that block as {T, N, d}.
Tensor window_block(const Tensor& m, std::size_t w, std::size_t t_len, std::size_t n) {
  const std::size_t d = m.dim(1);
  Tensor out({t_len, n, d});
  std::memcpy(out.data(), m.data() + w * t_len * n * d, t_len * n * d * sizeof(double));
  return out;
}

// Gathers input slots of the chosen windows into the batched row layout
// row = (w*T + t)*N + n.
Tensor window_inputs(const WindowDataset& ds, const std::vector<std::size_t>& idx) {
  const std::size_t t_len = idx.empty() ? 1 : ds.windows[idx[0]].inputs.size();
  const std::size_t n = ds.grid.regions(), d = ds.d_feat;
  Tensor x({idx.size() * t_len * n, d});
  for (std::size_t w = 0; w < idx.size(); ++w) {
    const SampleWindow& win = ds.windows[idx[w]];
    for (std::size_t t = 0; t < t_len; ++t) {
      const std::size_t slot = win.inputs[t];
      std::memcpy(x.data() + ((w * t_len + t) * n) * d,
                  ds.features.data() + (slot * n) * d, n * d * sizeof(double));
    }
  }
  return x;
}

double ratio_or_one(double num, double den) { return den > 0.0 ? num / den : 1.0; }

// Little-endian scalar encoding for the checkpoint file.
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  bool eof() const { return pos >= buf.size(); }
  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size())
      throw std::runtime_error(std::string("truncated checkpoint: ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

constexpr char kMagic[8] = {'R', 'I', 'S', 'K', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

json stats_to_json(const NormStats& st) {
  json j;
  j["lo"] = st.lo;
  j["hi"] = st.hi;
  j["degenerate"] = std::vector<int>(st.degenerate.begin(), st.degenerate.end());
  return j;
}

NormStats stats_from_json(const json& j) {
  NormStats st;
  st.lo = j.at("lo").get<std::vector<double>>();
  st.hi = j.at("hi").get<std::vector<double>>();
  for (int v : j.at("degenerate").get<std::vector<int>>())
    st.degenerate.push_back(static_cast<std::uint8_t>(v));
  require(st.lo.size() == st.hi.size() && st.lo.size() == st.degenerate.size(),
          "checkpoint norm stats are inconsistent");
  return st;
}

const Tensor& named_tensor(const Checkpoint& c, const std::string& name) {
  for (const auto& [n, t] : c.tensors)
    if (n == name) return t;
  throw std::runtime_error("checkpoint is missing tensor " + name);
}

void overwrite_params(ParamStore& ps, const Checkpoint& c, const std::string& prefix) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Param& p = ps.at(i);
    const Tensor& t = named_tensor(c, prefix + p.name);
    require(t.same_shape(p.value), "checkpoint tensor " + prefix + p.name +
                                       " has shape " + t.shape_str() + ", expected " +
                                       p.value.shape_str());
    p.value = t;
  }
}

}  // namespace

int risk_level_of(double x) {
  require(x >= 0.0, "risk level expects non-negative ground truth, got " +
                        std::to_string(x));
  if (x < 0.5) return 0;
  if (x < 1.5) return 1;
  if (x < 2.5) return 2;
  return 3;
}

double RiskLevelWeights::of(int level) const {
  switch (level) {
    case 0: return w0;
    case 1: return w1;
    case 2: return w2;
    default: return w3;
  }
}

Tensor level_weights(const Tensor& raw, const RiskLevelWeights& w) {
  Tensor out(raw.shape());
  for (std::size_t i = 0; i < raw.numel(); ++i)
    out.data()[i] = w.of(risk_level_of(raw.data()[i]));
  return out;
}

double weighted_prediction_loss(const Tensor& x, const Tensor& xhat,
                                const RiskLevelWeights& w) {
  require(x.same_shape(xhat), "weighted loss shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = x.data()[i] - xhat.data()[i];
    total += w.of(risk_level_of(x.data()[i])) * d * d;
  }
  return 0.5 * total;
}

double joint_loss(double lp, double lrec, double lkm, double lt,
                  const LossWeights& w) {
  return w.lambda1 * lp + w.lambda2 * (lrec + w.lambda4 * lkm) + w.lambda3 * lt;
}

AdamState init_adam(const ParamStore& ps) {
  AdamState st;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    st.m.push_back(Tensor(ps.at(i).value.shape()));
    st.v.push_back(Tensor(ps.at(i).value.shape()));
  }
  return st;
}

void adam_step(ParamStore& ps, AdamState& st, const AdamConfig& cfg) {
  require(st.m.size() == ps.size() && st.v.size() == ps.size(),
          "adam state does not match parameter store");
  st.t += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Param& p = ps.at(i);
    double* m = st.m[i].data();
    double* v = st.v[i].data();
    const double* g = p.grad.data();
    double* x = p.value.data();
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      if (!std::isfinite(g[j]))
        throw std::runtime_error("non-finite gradient in parameter " + p.name);
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      x[j] -= cfg.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
}

void validate_train_config(const TrainConfig& cfg) {
  validate_model_config(cfg.model);
  require(cfg.batch >= 1 && cfg.batch <= 4096, "batch size must be in 1..4096");
  require(cfg.max_epochs >= 1, "max_epochs must be at least 1");
  require(cfg.patience >= 1, "patience must be at least 1");
  require(cfg.adam.lr >= 0.0, "learning rate must be non-negative");
  require(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0, "beta1 must be in [0, 1)");
  require(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0, "beta2 must be in [0, 1)");
  require(cfg.adam.eps > 0.0, "adam epsilon must be positive");
  require(cfg.tau > 0.0, "contrastive temperature must be positive");
  require(cfg.augment.feature_rate >= 0.0 && cfg.augment.feature_rate <= 1.0,
          "feature_rate must be in [0, 1]");
  require(cfg.augment.graph_rate >= 0.0 && cfg.augment.graph_rate <= 1.0,
          "graph_rate must be in [0, 1]");
  require(cfg.augment.magnitude_scale >= 0.0, "magnitude_scale must be non-negative");
  require(cfg.weights.lambda1 >= 0.0 && cfg.weights.lambda2 >= 0.0 &&
              cfg.weights.lambda3 >= 0.0 && cfg.weights.lambda4 >= 0.0,
          "loss weights must be non-negative");
  require(cfg.levels.w0 > 0.0 && cfg.levels.w1 > 0.0 && cfg.levels.w2 > 0.0 &&
              cfg.levels.w3 > 0.0,
          "risk level weights must be positive");
  require(cfg.window.recent + cfg.window.weekly >= 1, "window must cover a slot");
  require(cfg.weights.lambda3 == 0.0 || cfg.window.window_len() >= 2,
          "temporal SSL needs a window of at least 2 slots");
  require(cfg.dwa_temp > 0.0, "dwa temperature must be positive");
}

WindowDataset make_dataset(const CityData& data, const WindowConfig& wcfg) {
  WindowDataset ds;
  ds.grid = data.meta.grid;
  require(data.features.rank() == 3, "features must be {slots, N, d}");
  require(data.features.dim(1) == ds.grid.regions(),
          "feature region count does not match the grid");
  ds.d_feat = data.features.dim(2);
  ds.slots = data.features.dim(0);
  ds.windows = build_windows(ds.slots, wcfg);
  ds.split = split_sizes(ds.windows.size());
  const std::size_t last_train_target = ds.windows[ds.split.train - 1].target;
  ds.stats = compute_norm_stats(data.features, 0, last_train_target + 1);
  ds.features = apply_normalization(data.features, ds.stats);
  ds.risk_raw = Tensor({ds.slots, ds.grid.regions()});
  for (std::size_t t = 0; t < ds.slots; ++t)
    for (std::size_t n = 0; n < ds.grid.regions(); ++n)
      ds.risk_raw.at2(t, n) = data.features.at3(t, n, 0);
  ds.adj = grid_adjacency(ds.grid.rows, ds.grid.cols);
  ds.ahat = normalize_adjacency(ds.adj);
  return ds;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::string out;
  out.append(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u64(out, c.config_json.size());
  out += c.config_json;
  for (const auto& [name, t] : c.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) put_u64(out, t.dim(i));
    for (std::size_t i = 0; i < t.numel(); ++i) put_f64(out, t.data()[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r{buf};

  const std::string magic = r.bytes(8, "magic");
  if (std::memcmp(magic.data(), kMagic, 8) != 0)
    throw std::runtime_error(path + ": not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  const std::uint64_t blob_len = r.u64("config length");
  Checkpoint c;
  c.config_json = r.bytes(blob_len, "config blob");

  while (!r.eof()) {
    const std::uint32_t name_len = r.u32("tensor name length");
    if (name_len == 0 || name_len > 4096)
      throw std::runtime_error(path + ": corrupt checkpoint (tensor name length)");
    const std::string name = r.bytes(name_len, "tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > 8)
      throw std::runtime_error(path + ": corrupt checkpoint (tensor rank)");
    std::vector<std::size_t> shape;
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint64_t d = r.u64("tensor dim");
      if (d == 0 || d > (1ull << 32))
        throw std::runtime_error(path + ": corrupt checkpoint (tensor dim)");
      shape.push_back(d);
      numel *= d;
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < numel; ++i) t.data()[i] = r.f64("tensor payload");
    c.tensors.emplace_back(name, std::move(t));
  }
  return c;
}

struct Trainer::Batch {
  std::size_t b = 0;
  Tensor x;            // {b*T*N, d} normalized inputs
  Tensor target_norm;  // {b*N}
  Tensor level_w;      // {b*N}
  SeqMeta meta;
};

Trainer::Trainer(WindowDataset ds, const TrainConfig& cfg)
    : ds_(std::move(ds)),
      cfg_(cfg),
      sgrid_(make_spline_grid(cfg.model.spline_degree, cfg.model.basis_count)) {
  validate_train_config(cfg_);
  require(cfg_.window.window_len() == ds_.windows[0].inputs.size(),
          "dataset was built with a different window config");
  require(cfg_.weights.lambda2 == 0.0 ||
              cfg_.model.clusters <= ds_.grid.regions(),
          "clusters must not exceed the region count");
  init_fresh();
}

void Trainer::init_fresh() {
  init_model_params(ps_, cfg_.model, ds_.d_feat, cfg_.seed);
  adam_ = init_adam(ps_);
  best_.clear();
  for (std::size_t i = 0; i < ps_.size(); ++i) best_.push_back(ps_.at(i).value);
  best_val_ = std::numeric_limits<double>::infinity();
  best_epoch_ = 0;
  epochs_done_ = 0;
  done_ = false;
  history_.clear();
  f_ = Tensor({ds_.grid.regions(), cfg_.model.clusters});
}

LossWeights Trainer::effective_weights() const {
  LossWeights eff = cfg_.weights;
  if (!cfg_.dwa || history_.size() < 2) return eff;
  const EpochStats& a = history_[history_.size() - 1];
  const EpochStats& b = history_[history_.size() - 2];
  const double r[3] = {
      ratio_or_one(a.lp, b.lp),
      ratio_or_one(a.lrec + cfg_.weights.lambda4 * a.lkm,
                   b.lrec + cfg_.weights.lambda4 * b.lkm),
      ratio_or_one(a.lt, b.lt)};
  double e[3], z = 0.0;
  for (int i = 0; i < 3; ++i) z += (e[i] = std::exp(r[i] / cfg_.dwa_temp));
  eff.lambda1 = cfg_.weights.lambda1 * 3.0 * e[0] / z;
  eff.lambda2 = cfg_.weights.lambda2 * 3.0 * e[1] / z;
  eff.lambda3 = cfg_.weights.lambda3 * 3.0 * e[2] / z;
  return eff;
}

Trainer::Batch Trainer::assemble(const std::vector<std::size_t>& idx) const {
  Batch b;
  b.b = idx.size();
  const std::size_t n = ds_.grid.regions();
  b.x = window_inputs(ds_, idx);
  b.target_norm = Tensor({b.b * n});
  Tensor raw({b.b * n});
  for (std::size_t w = 0; w < b.b; ++w) {
    const std::size_t target = ds_.windows[idx[w]].target;
    for (std::size_t r = 0; r < n; ++r) {
      b.target_norm.data()[w * n + r] = ds_.features.at3(target, r, 0);
      raw.data()[w * n + r] = ds_.risk_raw.at2(target, r);
    }
  }
  b.level_w = level_weights(raw, cfg_.levels);
  b.meta = SeqMeta{b.b, cfg_.window.window_len(), n};
  return b;
}

namespace {

// Original and augmented encoder views of one batch. Augmentation is
// computed from detached values of the first temporal block output and
// carries no gradient; both views share the encoder weights.
struct BatchViews {
  EncoderOut orig;
  EncoderOut aug;
};

BatchViews make_views(ad::Tape& tp, const ModelVars& mv, const SplineGrid& sgrid,
                      const WindowDataset& ds, const Tensor& x, SeqMeta meta,
                      bool with_aug, const AugmentConfig& acfg, std::uint64_t seed,
                      std::size_t epoch, std::size_t batch_ix,
                      const Tensor& w0) {
  BatchViews out;
  auto hats = std::make_shared<std::vector<Tensor>>();
  hats->push_back(ds.ahat);
  out.orig = st_encode(tp.leaf(x, false), mv.enc, sgrid, hats, meta);
  if (!with_aug) return out;

  // Copy C out: tape node storage may move as the second view is built.
  const Tensor c_all = out.orig.C.value();
  Tensor xt = x;
  auto hats_aug = std::make_shared<std::vector<Tensor>>();
  for (std::size_t w = 0; w < meta.batch; ++w) {
    const Tensor cw = window_block(c_all, w, meta.T, meta.N);
    const Tensor q = local_global_scores(cw, w0);
    const Tensor xw = window_block(x, w, meta.T, meta.N);
    SplitMix64 rng =
        substream(seed, StreamTag::Augment, augment_index(epoch, batch_ix, w));
    const IncidentAugment ia =
        incident_augment(xw, q, acfg.feature_rate, acfg.magnitude_scale, rng);
    std::memcpy(xt.data() + w * meta.T * meta.N * ia.x.dim(2), ia.x.data(),
                ia.x.numel() * sizeof(double));
    const PearsonResult pr = pearson_matrix(q);
    const GraphAugment ga = graph_augment(ds.adj, pr.o, acfg.graph_rate, rng);
    hats_aug->push_back(normalize_adjacency(ga.a));
  }
  out.aug = st_encode(tp.leaf(xt, false), mv.enc, sgrid, hats_aug, meta);
  return out;
}

}  // namespace

// The cluster indicator is refreshed once per epoch from the epoch's
// first batch, before any updates, using the same augmentation streams
// that batch will draw during training. F is then held constant
// (stop-gradient) for the whole epoch.
void Trainer::refresh_indicator(const std::vector<std::size_t>& order) {
  if (cfg_.weights.lambda2 <= 0.0) return;
  const std::size_t nb = std::min<std::size_t>(cfg_.batch, order.size());
  const Batch b = assemble({order.begin(), order.begin() + nb});
  ad::Tape tp;
  const ModelVars mv = leaf_model(tp, ps_, cfg_.model);
  const BatchViews views =
      make_views(tp, mv, sgrid_, ds_, b.x, b.meta, true, cfg_.augment, cfg_.seed,
                 epochs_done_, 0, ps_.get("disc.w0").value);
  const ad::Var v = fuse_embeddings(views.orig.M, views.aug.M, mv.fuse_w1, mv.fuse_w2);
  const std::size_t n = ds_.grid.regions();
  Tensor mean_gram({n, n});
  for (std::size_t w = 0; w < b.b; ++w) {
    const ad::Var vw = ad::slice_rows(v, w * n, (w + 1) * n);
    const AutoencodeOut ao =
        autoencode(vw, mv.ae_enc, mv.ae_benc, mv.ae_dec, mv.ae_bdec);
    const Tensor g = gram_of(ao.dlat.value());
    for (std::size_t i = 0; i < mean_gram.numel(); ++i)
      mean_gram.data()[i] += g.data()[i] / static_cast<double>(b.b);
  }
  f_ = indicator_from_gram(mean_gram, cfg_.model.clusters);
}

void Trainer::epoch() {
  require(!done_, "training already finished");
  const std::size_t e = epochs_done_;
  const std::size_t n_train = ds_.split.train;
  const LossWeights eff = effective_weights();

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 shuffle_rng = substream(cfg_.seed, StreamTag::Shuffle, e);
  for (std::size_t i = n_train; i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.below(i)]);

  refresh_indicator(order);

  EpochStats acc;
  std::size_t batch_ix = 0;
  for (std::size_t off = 0; off < n_train; off += cfg_.batch, ++batch_ix) {
    const std::size_t hi = std::min(n_train, off + cfg_.batch);
    const Batch b = assemble({order.begin() + off, order.begin() + hi});
    train_batch(e, batch_ix, b, eff, acc);
  }
  acc.lp /= static_cast<double>(n_train);
  acc.lrec /= static_cast<double>(n_train);
  acc.lkm /= static_cast<double>(n_train);
  acc.lt /= static_cast<double>(n_train);
  acc.joint /= static_cast<double>(n_train);
  acc.val_lp = validation_lp();
  history_.push_back(acc);

  if (acc.val_lp < best_val_) {
    best_val_ = acc.val_lp;
    best_epoch_ = e;
    for (std::size_t i = 0; i < ps_.size(); ++i) best_[i] = ps_.at(i).value;
  }
  epochs_done_ += 1;
  if (epochs_done_ >= cfg_.max_epochs) done_ = true;
  if (epochs_done_ - 1 - best_epoch_ >= cfg_.patience) done_ = true;
}

double Trainer::train_batch(std::size_t epoch_ix, std::size_t batch_ix, const Batch& b,
                            const LossWeights& eff, EpochStats& acc) {
  const bool spatial = cfg_.weights.lambda2 > 0.0;
  const bool temporal = cfg_.weights.lambda3 > 0.0;
  const bool with_aug = spatial || temporal;

  ps_.zero_grads();
  try {
  ad::Tape tp;
  ad::LeafSet leaves;
  const ModelVars mv = bind_model(tp, leaves, ps_, cfg_.model);
  const BatchViews views =
      make_views(tp, mv, sgrid_, ds_, b.x, b.meta, with_aug, cfg_.augment, cfg_.seed,
                 epoch_ix, batch_ix, ps_.get("disc.w0").value);

  const ad::Var pred = predict_head(views.orig.M, mv);
  const ad::Var diff = ad::sub(pred, tp.leaf(b.target_norm, false));
  const ad::Var lp = ad::scale(
      ad::sum(ad::mul(ad::mul(diff, tp.leaf(b.level_w, false)), diff)),
      0.5 / static_cast<double>(b.b));

  ad::Var total = ad::scale(lp, eff.lambda1);
  double lrec_val = 0.0, lkm_val = 0.0, lt_val = 0.0;
  if (spatial) {
    const ad::Var v =
        fuse_embeddings(views.orig.M, views.aug.M, mv.fuse_w1, mv.fuse_w2);
    ad::Var lrec, lkm;
    for (std::size_t w = 0; w < b.b; ++w) {
      const ad::Var vw = ad::slice_rows(v, w * b.meta.N, (w + 1) * b.meta.N);
      const AutoencodeOut ao =
          autoencode(vw, mv.ae_enc, mv.ae_benc, mv.ae_dec, mv.ae_bdec);
      const ad::Var r = reconstruction_loss(vw, ao.vprime);
      const ad::Var km = kmeans_loss(ao.dlat, f_);
      lrec = w == 0 ? r : ad::add(lrec, r);
      lkm = w == 0 ? km : ad::add(lkm, km);
    }
    lrec = ad::scale(lrec, 1.0 / static_cast<double>(b.b));
    lkm = ad::scale(lkm, 1.0 / static_cast<double>(b.b));
    lrec_val = lrec.value().data()[0];
    lkm_val = lkm.value().data()[0];
    total = ad::add(
        total,
        ad::scale(ad::add(lrec, ad::scale(lkm, cfg_.weights.lambda4)), eff.lambda2));
  }
  if (temporal) {
    const ad::Var p = ad::matmul(views.orig.Hseq, mv.ssl_wb);
    const ad::Var scores = pair_scores(p, views.aug.Hseq, b.meta);
    const ad::Var lt = info_nce(scores, b.meta, cfg_.tau);
    lt_val = lt.value().data()[0];
    total = ad::add(total, ad::scale(lt, eff.lambda3));
  }

  const double lp_val = lp.value().data()[0];
  const double joint_val = total.value().data()[0];
  if (!std::isfinite(joint_val))
    throw DivergenceError(
        "training diverged at epoch " + std::to_string(epoch_ix) + " batch " +
        std::to_string(batch_ix) + ": lp=" + std::to_string(lp_val) +
        " lrec=" + std::to_string(lrec_val) + " lkm=" + std::to_string(lkm_val) +
        " lt=" + std::to_string(lt_val));

  tp.backward(total);
  leaves.harvest();
  adam_step(ps_, adam_, cfg_.adam);

  const double bw = static_cast<double>(b.b);
  acc.lp += lp_val * bw;
  acc.lrec += lrec_val * bw;
  acc.lkm += lkm_val * bw;
  acc.lt += lt_val * bw;
  acc.joint += joint_val * bw;
  return joint_val;
  } catch (const DivergenceError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    // Adam rejects non-finite gradients, so parameters stay finite and
    // blowups surface as inf/NaN activations tripping kernel
    // preconditions. Runaway parameter magnitude tells divergence apart
    // from a genuine precondition bug.
    double pmax = 0.0;
    for (std::size_t i = 0; i < ps_.size(); ++i) {
      const Tensor& t = ps_.at(i).value;
      for (std::size_t j = 0; j < t.numel(); ++j)
        pmax = std::max(pmax, std::abs(t.data()[j]));
    }
    if (pmax > 1e50) {
      char mag[32];
      std::snprintf(mag, sizeof mag, "%.3g", pmax);
      throw DivergenceError("training diverged at epoch " +
                            std::to_string(epoch_ix) + " batch " +
                            std::to_string(batch_ix) +
                            ": forward failed with runaway parameters (max "
                            "|param| " +
                            mag + "): " + e.what());
    }
    throw;
  }
}

double Trainer::validation_lp() {
  const std::size_t begin = ds_.split.train;
  const std::size_t count = ds_.split.val;
  double total = 0.0;
  for (std::size_t off = 0; off < count; off += cfg_.batch) {
    const std::size_t hi = std::min(count, off + cfg_.batch);
    std::vector<std::size_t> idx(hi - off);
    std::iota(idx.begin(), idx.end(), begin + off);
    const Batch b = assemble(idx);
    ad::Tape tp;
    const ModelVars mv = leaf_model(tp, ps_, cfg_.model);
    const BatchViews views = make_views(tp, mv, sgrid_, ds_, b.x, b.meta, false,
                                        cfg_.augment, cfg_.seed, 0, 0,
                                        ps_.get("disc.w0").value);
    const Tensor pred = predict_head(views.orig.M, mv).value();
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      const double d = pred.data()[i] - b.target_norm.data()[i];
      total += 0.5 * b.level_w.data()[i] * d * d;
    }
  }
  return total / static_cast<double>(count);
}

void Trainer::load_best() {
  for (std::size_t i = 0; i < ps_.size(); ++i) ps_.at(i).value = best_[i];
}

void Trainer::run() {
  while (!done_) epoch();
  load_best();
}

Checkpoint Trainer::to_checkpoint() const {
  json j;
  j["model"] = {{"d_model", cfg_.model.d_model},
                {"d_state", cfg_.model.d_state},
                {"conv_width", cfg_.model.conv_width},
                {"layers", cfg_.model.layers},
                {"spline_degree", cfg_.model.spline_degree},
                {"basis_count", cfg_.model.basis_count},
                {"clusters", cfg_.model.clusters}};
  j["window"] = {{"recent", cfg_.window.recent},
                 {"weekly", cfg_.window.weekly},
                 {"slots_per_week", cfg_.window.slots_per_week}};
  j["augment"] = {{"feature_rate", cfg_.augment.feature_rate},
                  {"graph_rate", cfg_.augment.graph_rate},
                  {"magnitude_scale", cfg_.augment.magnitude_scale}};
  j["train"] = {{"tau", cfg_.tau},
                {"batch", cfg_.batch},
                {"max_epochs", cfg_.max_epochs},
                {"patience", cfg_.patience},
                {"lr", cfg_.adam.lr},
                {"beta1", cfg_.adam.beta1},
                {"beta2", cfg_.adam.beta2},
                {"eps", cfg_.adam.eps},
                {"seed", cfg_.seed},
                {"lambda1", cfg_.weights.lambda1},
                {"lambda2", cfg_.weights.lambda2},
                {"lambda3", cfg_.weights.lambda3},
                {"lambda4", cfg_.weights.lambda4},
                {"levels", {cfg_.levels.w0, cfg_.levels.w1, cfg_.levels.w2,
                            cfg_.levels.w3}},
                {"dwa", cfg_.dwa},
                {"dwa_temp", cfg_.dwa_temp}};
  j["data"] = {{"rows", ds_.grid.rows},
               {"cols", ds_.grid.cols},
               {"cell_km", ds_.grid.cell_km},
               {"channels", ds_.d_feat},
               {"slots", ds_.slots}};
  j["norm"] = stats_to_json(ds_.stats);
  j["progress"] = {{"epochs_done", epochs_done_},
                   {"best_epoch", best_epoch_},
                   {"adam_t", adam_.t},
                   {"done", done_}};
  if (std::isfinite(best_val_)) j["progress"]["best_val"] = best_val_;
  json hist = json::array();
  for (const EpochStats& s : history_)
    hist.push_back({s.lp, s.lrec, s.lkm, s.lt, s.joint, s.val_lp});
  j["history"] = hist;

  Checkpoint c;
  c.config_json = j.dump(2);
  c.config_json.push_back('\n');
  for (std::size_t i = 0; i < ps_.size(); ++i)
    c.tensors.emplace_back("param/" + ps_.at(i).name, ps_.at(i).value);
  for (std::size_t i = 0; i < ps_.size(); ++i)
    c.tensors.emplace_back("adam_m/" + ps_.at(i).name, adam_.m[i]);
  for (std::size_t i = 0; i < ps_.size(); ++i)
    c.tensors.emplace_back("adam_v/" + ps_.at(i).name, adam_.v[i]);
  for (std::size_t i = 0; i < ps_.size(); ++i)
    c.tensors.emplace_back("best/" + ps_.at(i).name, best_[i]);
  return c;
}

LoadedRun parse_checkpoint(const Checkpoint& c) {
  json j;
  try {
    j = json::parse(c.config_json);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("corrupt checkpoint config blob: ") +
                             e.what());
  }
  LoadedRun run;
  try {
    const json& m = j.at("model");
    run.cfg.model.d_model = m.at("d_model").get<std::size_t>();
    run.cfg.model.d_state = m.at("d_state").get<std::size_t>();
    run.cfg.model.conv_width = m.at("conv_width").get<std::size_t>();
    run.cfg.model.layers = m.at("layers").get<std::size_t>();
    run.cfg.model.spline_degree = m.at("spline_degree").get<int>();
    run.cfg.model.basis_count = m.at("basis_count").get<int>();
    run.cfg.model.clusters = m.at("clusters").get<std::size_t>();
    const json& w = j.at("window");
    run.cfg.window.recent = w.at("recent").get<std::size_t>();
    run.cfg.window.weekly = w.at("weekly").get<std::size_t>();
    run.cfg.window.slots_per_week = w.at("slots_per_week").get<std::size_t>();
    const json& a = j.at("augment");
    run.cfg.augment.feature_rate = a.at("feature_rate").get<double>();
    run.cfg.augment.graph_rate = a.at("graph_rate").get<double>();
    run.cfg.augment.magnitude_scale = a.at("magnitude_scale").get<double>();
    const json& t = j.at("train");
    run.cfg.tau = t.at("tau").get<double>();
    run.cfg.batch = t.at("batch").get<std::size_t>();
    run.cfg.max_epochs = t.at("max_epochs").get<std::size_t>();
    run.cfg.patience = t.at("patience").get<std::size_t>();
    run.cfg.adam.lr = t.at("lr").get<double>();
    run.cfg.adam.beta1 = t.at("beta1").get<double>();
    run.cfg.adam.beta2 = t.at("beta2").get<double>();
    run.cfg.adam.eps = t.at("eps").get<double>();
    run.cfg.seed = t.at("seed").get<std::uint64_t>();
    run.cfg.weights.lambda1 = t.at("lambda1").get<double>();
    run.cfg.weights.lambda2 = t.at("lambda2").get<double>();
    run.cfg.weights.lambda3 = t.at("lambda3").get<double>();
    run.cfg.weights.lambda4 = t.at("lambda4").get<double>();
    const std::vector<double> lv = t.at("levels").get<std::vector<double>>();
    require(lv.size() == 4, "checkpoint level weights must have 4 entries");
    run.cfg.levels = RiskLevelWeights{lv[0], lv[1], lv[2], lv[3]};
    run.cfg.dwa = t.at("dwa").get<bool>();
    run.cfg.dwa_temp = t.at("dwa_temp").get<double>();
    const json& d = j.at("data");
    run.grid.rows = d.at("rows").get<std::size_t>();
    run.grid.cols = d.at("cols").get<std::size_t>();
    run.grid.cell_km = d.at("cell_km").get<double>();
    run.channels = d.at("channels").get<std::size_t>();
    run.slots = d.at("slots").get<std::size_t>();
    run.stats = stats_from_json(j.at("norm"));
    const json& p = j.at("progress");
    run.epochs_done = p.at("epochs_done").get<std::size_t>();
    run.best_epoch = p.at("best_epoch").get<std::size_t>();
    run.adam.t = p.at("adam_t").get<std::uint64_t>();
    run.done = p.at("done").get<bool>();
    run.best_val = p.contains("best_val")
                       ? p.at("best_val").get<double>()
                       : std::numeric_limits<double>::infinity();
    for (const json& row : j.at("history")) {
      require(row.is_array() && row.size() == 6, "checkpoint history row malformed");
      EpochStats s;
      s.lp = row[0].get<double>();
      s.lrec = row[1].get<double>();
      s.lkm = row[2].get<double>();
      s.lt = row[3].get<double>();
      s.joint = row[4].get<double>();
      s.val_lp = row[5].get<double>();
      run.history.push_back(s);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint config blob is missing fields: ") +
                             e.what());
  }

  init_model_params(run.params, run.cfg.model, run.channels, run.cfg.seed);
  overwrite_params(run.params, c, "param/");
  init_model_params(run.best, run.cfg.model, run.channels, run.cfg.seed);
  overwrite_params(run.best, c, "best/");
  run.adam.m.clear();
  run.adam.v.clear();
  for (std::size_t i = 0; i < run.params.size(); ++i) {
    const std::string& name = run.params.at(i).name;
    run.adam.m.push_back(named_tensor(c, "adam_m/" + name));
    run.adam.v.push_back(named_tensor(c, "adam_v/" + name));
  }
  return run;
}

Trainer::Trainer(WindowDataset ds, const Checkpoint& c)
    : ds_(std::move(ds)),
      cfg_(),
      sgrid_() {
  LoadedRun run = parse_checkpoint(c);
  cfg_ = run.cfg;
  validate_train_config(cfg_);
  sgrid_ = make_spline_grid(cfg_.model.spline_degree, cfg_.model.basis_count);
  require(ds_.grid.rows == run.grid.rows && ds_.grid.cols == run.grid.cols,
          "checkpoint grid does not match the dataset");
  require(ds_.d_feat == run.channels && ds_.slots == run.slots,
          "checkpoint data dims do not match the dataset");
  require(ds_.stats.lo == run.stats.lo && ds_.stats.hi == run.stats.hi &&
              ds_.stats.degenerate == run.stats.degenerate,
          "checkpoint normalization stats do not match the dataset");
  require(cfg_.window.window_len() == ds_.windows[0].inputs.size(),
          "dataset was built with a different window config");
  ps_ = std::move(run.params);
  adam_ = std::move(run.adam);
  best_.clear();
  for (std::size_t i = 0; i < run.best.size(); ++i)
    best_.push_back(run.best.at(i).value);
  best_val_ = run.best_val;
  best_epoch_ = run.best_epoch;
  epochs_done_ = run.epochs_done;
  done_ = run.done;
  history_ = run.history;
  f_ = Tensor({ds_.grid.regions(), cfg_.model.clusters});
}

SplitEval evaluate_split(const WindowDataset& ds, const ModelConfig& mcfg,
                         ParamStore& ps, Split split, const TopKConfig& k) {
  std::size_t begin = 0, count = 0;
  switch (split) {
    case Split::Train: begin = 0; count = ds.split.train; break;
    case Split::Val: begin = ds.split.train; count = ds.split.val; break;
    case Split::Test: begin = ds.split.train + ds.split.val; count = ds.split.test; break;
  }
  require(count >= 1, "split has no windows");
  const std::size_t n = ds.grid.regions();
  const SplineGrid sgrid = make_spline_grid(mcfg.spline_degree, mcfg.basis_count);
  const std::size_t t_len = ds.windows[0].inputs.size();

  SplitEval ev;
  ev.truth = Tensor({count, n});
  ev.pred = Tensor({count, n});
  const std::size_t chunk = 32;
  for (std::size_t off = 0; off < count; off += chunk) {
    const std::size_t hi = std::min(count, off + chunk);
    std::vector<std::size_t> idx(hi - off);
    std::iota(idx.begin(), idx.end(), begin + off);
    const Tensor x = window_inputs(ds, idx);
    const SeqMeta meta{idx.size(), t_len, n};
    ad::Tape tp;
    const ModelVars mv = leaf_model(tp, ps, mcfg);
    auto hats = std::make_shared<std::vector<Tensor>>();
    hats->push_back(ds.ahat);
    const EncoderOut out = st_encode(tp.leaf(x, false), mv.enc, sgrid, hats, meta);
    const Tensor pred = predict_head(out.M, mv).value();
    for (std::size_t w = 0; w < idx.size(); ++w) {
      const std::size_t target = ds.windows[idx[w]].target;
      for (std::size_t r = 0; r < n; ++r) {
        ev.truth.at2(off + w, r) = ds.risk_raw.at2(target, r);
        ev.pred.at2(off + w, r) =
            denormalize_value(ds.stats, 0, pred.data()[w * n + r]);
      }
    }
  }
  ev.report = compute_metrics(ev.truth, ev.pred, k);
  return ev;
}

}  // namespace riskcast
