#include "riskcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace riskcast {
namespace {

void check_pair(const Tensor& x, const Tensor& xhat) {
  require(x.rank() == 2 && xhat.rank() == 2, "metrics expect {T, N} tensors");
  require(x.same_shape(xhat), "metrics shape mismatch");
  require(x.dim(0) >= 1 && x.dim(1) >= 1, "metrics need at least one slot and region");
}

void check_k(const TopKConfig& cfg, std::size_t n) {
  require(cfg.k >= 1 && cfg.k <= n,
          "top-k must satisfy 1 <= k <= N, got k=" + std::to_string(cfg.k) +
              " with N=" + std::to_string(n));
}

}  // namespace

double rmse(const Tensor& x, const Tensor& xhat) {
  check_pair(x, xhat);
  const std::size_t t_count = x.dim(0), n = x.dim(1);
  double total = 0.0;
  for (std::size_t t = 0; t < t_count; ++t) {
    double slot = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = x.at2(t, r) - xhat.at2(t, r);
      slot += d * d;
    }
    total += slot / static_cast<double>(n);
  }
  return std::sqrt(total / static_cast<double>(t_count));
}

std::vector<std::size_t> top_k_indices(const double* scores, std::size_t n,
                                       std::size_t k) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  order.resize(k);
  return order;
}

double recall_at_k(const Tensor& x, const Tensor& xhat, const TopKConfig& cfg) {
  check_pair(x, xhat);
  check_k(cfg, x.dim(1));
  const std::size_t t_count = x.dim(0), n = x.dim(1);
  double total = 0.0;
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::vector<std::size_t> top = top_k_indices(xhat.data() + t * n, n, cfg.k);
    std::size_t hits = 0;
    for (std::size_t r : top)
      if (x.at2(t, r) > 0.0) ++hits;
    total += static_cast<double>(hits) / static_cast<double>(cfg.k);
  }
  return total / static_cast<double>(t_count);
}

double map_at_k(const Tensor& x, const Tensor& xhat, const TopKConfig& cfg) {
  check_pair(x, xhat);
  check_k(cfg, x.dim(1));
  const std::size_t t_count = x.dim(0), n = x.dim(1);
  double total = 0.0;
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::vector<std::size_t> top = top_k_indices(xhat.data() + t * n, n, cfg.k);
    double ap = 0.0;
    std::size_t relevant = 0;
    for (std::size_t j = 0; j < cfg.k; ++j) {
      if (x.at2(t, top[j]) > 0.0) {
        ++relevant;
        ap += static_cast<double>(relevant) / static_cast<double>(j + 1);
      }
    }
    total += ap / static_cast<double>(cfg.k);
  }
  return total / static_cast<double>(t_count);
}

MetricsReport compute_metrics(const Tensor& x, const Tensor& xhat,
                              const TopKConfig& cfg) {
  MetricsReport r;
  r.rmse = rmse(x, xhat);
  r.recall = recall_at_k(x, xhat, cfg);
  r.map = map_at_k(x, xhat, cfg);
  r.k = cfg.k;
  return r;
}

std::string format_report(const MetricsReport& r) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "rmse %.17g\n", r.rmse);
  out += buf;
  std::snprintf(buf, sizeof(buf), "recall_at_%zu %.17g\n", r.k, r.recall);
  out += buf;
  std::snprintf(buf, sizeof(buf), "map_at_%zu %.17g\n", r.k, r.map);
  out += buf;
  return out;
}

void write_report(const std::string& path, const MetricsReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << format_report(r);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace riskcast
