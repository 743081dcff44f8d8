#pragma once
#include <cstddef>
#include <string>
#include <vector>

#include "riskcast/tensor.hpp"

// Forecast quality metrics over {T, N} risk sequences (rows are prediction
// slots, columns regions, raw denormalized scale).
//
// Ranking uses one deterministic order everywhere: higher predicted value
// first, ties broken by lower region index. Recall@k divides by k (the
// predicted set size), and MAP@k divides the precision sum by k.
namespace riskcast {

struct TopKConfig {
  std::size_t k = 20;
};

double rmse(const Tensor& x, const Tensor& xhat);

// First k region indices in ranking order of one score row.
std::vector<std::size_t> top_k_indices(const double* scores, std::size_t n,
                                       std::size_t k);

double recall_at_k(const Tensor& x, const Tensor& xhat, const TopKConfig& cfg);
double map_at_k(const Tensor& x, const Tensor& xhat, const TopKConfig& cfg);

struct MetricsReport {
  double rmse = 0.0;
  double recall = 0.0;
  double map = 0.0;
  std::size_t k = 0;
};
MetricsReport compute_metrics(const Tensor& x, const Tensor& xhat, const TopKConfig& cfg);

// Flat "name value" lines, 17 significant digits.
std::string format_report(const MetricsReport& r);
void write_report(const std::string& path, const MetricsReport& r);

}  // namespace riskcast
