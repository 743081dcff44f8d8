#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "riskcast/dataio.hpp"
#include "riskcast/model.hpp"
#include "riskcast/metrics.hpp"
#include "riskcast/tensor.hpp"

// Training: weighted prediction loss, joint objective, Adam, the
// four-stage loop (encode, augment + re-encode with shared weights,
// losses, backprop), early stopping on validation prediction loss, and
// binary checkpoints.
//
// Losses are computed in normalized space; the per-entry risk-level
// weights come from the denormalized ground truth. Per batch the loss is
// the mean over windows of the per-window value. All randomness flows
// through named substreams of the run seed, so a run is a pure function
// of (dataset bytes, config, seed) and resuming from a checkpoint at an
// epoch boundary reproduces the uninterrupted run bit for bit.
namespace riskcast {

// Ground-truth buckets 0, 1, 2, >=3. x must be non-negative raw risk.
int risk_level_of(double x);

struct RiskLevelWeights {
  double w0 = 0.05, w1 = 0.2, w2 = 0.25, w3 = 0.5;
  double of(int level) const;
};

struct LossWeights {
  double lambda1 = 1.0;  // prediction
  double lambda2 = 0.5;  // spatial SSL (reconstruction + lambda4 * k-means)
  double lambda3 = 0.5;  // temporal SSL
  double lambda4 = 0.1;  // k-means share inside the spatial term
};

// Per-entry lambda_{level(raw)} weights, same shape as raw.
Tensor level_weights(const Tensor& raw, const RiskLevelWeights& w);

// (1/2) sum_i lambda_{level(x_i)} (x_i - xhat_i)^2 with levels from x.
double weighted_prediction_loss(const Tensor& x, const Tensor& xhat,
                                const RiskLevelWeights& w);

double joint_loss(double lp, double lrec, double lkm, double lt,
                  const LossWeights& w);

struct AdamConfig {
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;  // ParamStore order
  std::uint64_t t = 0;
};
AdamState init_adam(const ParamStore& ps);
// Applies one bias-corrected update from the accumulated grads.
// Non-finite gradients abort with the parameter's name.
void adam_step(ParamStore& ps, AdamState& st, const AdamConfig& cfg);

struct AugmentConfig {
  double feature_rate = 0.2;
  double graph_rate = 0.5;
  double magnitude_scale = 1.0;
};

struct TrainConfig {
  ModelConfig model;
  WindowConfig window;
  AugmentConfig augment;
  double tau = 0.5;  // temporal InfoNCE temperature
  std::size_t batch = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  AdamConfig adam;
  std::uint64_t seed = 0;
  LossWeights weights;
  RiskLevelWeights levels;
  bool dwa = false;  // optional descent-rate reweighting of lambda1..3
  double dwa_temp = 2.0;
};
void validate_train_config(const TrainConfig& cfg);

struct EpochStats {
  double lp = 0, lrec = 0, lkm = 0, lt = 0, joint = 0, val_lp = 0;
};

// Normalized features plus everything the loop needs precomputed.
struct WindowDataset {
  CityGrid grid;
  std::size_t d_feat = 1;
  std::size_t slots = 0;
  Tensor features;  // {slots, N, d}, normalized
  Tensor risk_raw;  // {slots, N}, raw channel 0
  NormStats stats;
  std::vector<SampleWindow> windows;
  SplitSizes split;
  Tensor adj;   // 0/1 grid adjacency
  Tensor ahat;  // normalized adjacency
};
// Normalization stats come from slots [0, last train target], so no
// validation or test information leaks into them.
WindowDataset make_dataset(const CityData& data, const WindowConfig& wcfg);

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named-tensor container mirroring the checkpoint file: a config JSON
// blob plus ordered (name, tensor) records.
struct Checkpoint {
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

class Trainer {
 public:
  Trainer(WindowDataset ds, const TrainConfig& cfg);
  // Restores a mid-run state; ds must be rebuilt from the same data.
  Trainer(WindowDataset ds, const Checkpoint& c);

  // Runs one epoch: refresh the cluster indicator, train all batches,
  // evaluate validation loss, update the early-stop state.
  void epoch();
  bool done() const { return done_; }
  // Epochs until done, then loads the best parameters back into params().
  void run();

  const std::vector<EpochStats>& history() const { return history_; }
  std::size_t epochs_done() const { return epochs_done_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_val() const { return best_val_; }
  ParamStore& params() { return ps_; }
  const TrainConfig& config() const { return cfg_; }
  const WindowDataset& dataset() const { return ds_; }

  // Copies the best snapshot into params(). run() does this on finish.
  void load_best();

  Checkpoint to_checkpoint() const;

 private:
  struct Batch;
  Batch assemble(const std::vector<std::size_t>& idx) const;
  void refresh_indicator(const std::vector<std::size_t>& order);
  double train_batch(std::size_t epoch_ix, std::size_t batch_ix, const Batch& b,
                     const LossWeights& eff, EpochStats& acc);
  double validation_lp();
  LossWeights effective_weights() const;
  void init_fresh();

  WindowDataset ds_;
  TrainConfig cfg_;
  SplineGrid sgrid_;
  ParamStore ps_;
  AdamState adam_;
  std::vector<Tensor> best_;  // value snapshot, ParamStore order
  double best_val_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t epochs_done_ = 0;
  bool done_ = false;
  std::vector<EpochStats> history_;
  Tensor f_;  // cluster indicator, refreshed per epoch
};

// Split selector for evaluation.
enum class Split { Train, Val, Test };

struct SplitEval {
  Tensor truth;  // {windows, N} raw risk at targets
  Tensor pred;   // {windows, N} denormalized predictions
  MetricsReport report;
};
// Forward passes without augmentation, denormalizes channel 0, scores
// against raw ground truth.
SplitEval evaluate_split(const WindowDataset& ds, const ModelConfig& mcfg,
                         ParamStore& ps, Split split, const TopKConfig& k);

// Everything parse-able back out of a checkpoint.
struct LoadedRun {
  TrainConfig cfg;
  CityGrid grid;
  std::size_t channels = 1;
  std::size_t slots = 0;
  NormStats stats;
  ParamStore params;  // live parameters
  ParamStore best;    // best-epoch parameters
  AdamState adam;
  std::size_t epochs_done = 0;
  std::size_t best_epoch = 0;
  double best_val = 0;
  bool done = false;
  std::vector<EpochStats> history;
};
LoadedRun parse_checkpoint(const Checkpoint& c);

}  // namespace riskcast
