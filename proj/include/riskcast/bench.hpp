#ifndef RISKCAST_BENCH_HPP
#define RISKCAST_BENCH_HPP

#include <string>
#include <vector>

#include "riskcast/config.hpp"
#include "riskcast/kan.hpp"

// Wall-clock and allocation comparison of the efficient KAN layer against
// the per-edge naive layer and a plain linear layer of the same shape.
// Equivalence of the two KAN variants is asserted before any timing; a
// benchmark of non-equivalent computations is invalid and aborts. All
// work runs on the calling thread.
namespace riskcast {

struct VariantStats {
  std::string name;
  double forward_ms = 0.0;  // median over repeats
  double train_ms = 0.0;    // forward+backward median
  std::size_t forward_peak_bytes = 0;
  std::size_t train_peak_bytes = 0;
  double checksum = 0.0;  // sum of the forward output
};

struct BenchReport {
  BenchConfig cfg;
  std::size_t threads = 1;
  // naive / ekan ratios; > 1 means the naive layer costs more.
  double forward_time_ratio = 0.0;
  double train_time_ratio = 0.0;
  double forward_peak_ratio = 0.0;
  std::vector<VariantStats> variants;  // ekan, naive, linear
};

// Middle element, or the mean of the two middle elements.
double median(std::vector<double> v);

// Max |a - b| over elements must be within tol. Throws std::runtime_error
// naming the gap otherwise.
void require_equivalent(const Tensor& a, const Tensor& b, double tol);

// Deterministic single-layer d_model -> d_model stack and matching input.
KanStack bench_stack(const BenchConfig& cfg);
Tensor bench_input(const BenchConfig& cfg);

BenchReport run_bench(const BenchConfig& cfg);

// "variant,metric,value" rows: meta, per-variant stats, then ratios.
std::string bench_csv(const BenchReport& r);
void write_bench_csv(const std::string& path, const BenchReport& r);

}  // namespace riskcast

#endif  // RISKCAST_BENCH_HPP
