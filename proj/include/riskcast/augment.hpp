#pragma once
#include <cstdint>
#include <vector>

#include "riskcast/rng.hpp"
#include "riskcast/tensor.hpp"

// Heterogeneity-guided augmentation.
//
// From the first temporal block's embedding sequence C (T x N x D) a shared
// direction w0 scores each (slot, region): q = C w0. Aggregating q-weighted
// embeddings over time gives a per-region global vector p. Regions whose
// local scores sit low get boosted augmentation probability via
// softmax(-q), and region pairs whose q series correlate weakly are
// preferred when rewiring the graph.
//
// These are pure tensor computations on detached values; augmentation is
// data generation and carries no gradient.
namespace riskcast {

// Local variability scores q[t,n] = c[t,n] . w0. C: T x N x D, w0: D.
Tensor local_global_scores(const Tensor& c, const Tensor& w0);

// Global aggregate p[n] = sum_t q[t,n] * c[t,n], returned N x D.
Tensor temporal_aggregate(const Tensor& q, const Tensor& c);

struct PearsonResult {
  Tensor o;  // N x N correlation of per-region series
  std::vector<std::uint8_t> constant;  // regions with zero-variance series
};

// s: T x N, one series per region. Pairs involving a constant series get
// correlation zero and are flagged.
PearsonResult pearson_matrix(const Tensor& s);

struct IncidentAugment {
  Tensor x;  // perturbed copy, T x N x d
  std::vector<std::vector<std::size_t>> chosen;  // per slot, selected regions
  double magnitude = 0.0;
};

// Per slot, draws ceil(rate * N) distinct regions without replacement with
// probabilities softmax(-q[t,:]) and adds magnitude_scale * std(risk
// channel over the window) to their risk channel. Never decreases risk.
IncidentAugment incident_augment(const Tensor& x, const Tensor& q, double rate,
                                 double magnitude_scale, SplitMix64& rng);

struct GraphAugment {
  Tensor a;  // perturbed adjacency, symmetric, zero diagonal
  std::size_t removed = 0;
  std::size_t added = 0;
};

// Removes existing edges with probabilities proportional to
// exp(-o) over edges, scaled so the expected removal count is rate * |E|,
// then adds the same number of edges at the highest-o non-adjacent pairs.
GraphAugment graph_augment(const Tensor& a, const Tensor& o, double rate,
                           SplitMix64& rng);

}  // namespace riskcast
