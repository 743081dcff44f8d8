#ifndef RISKCAST_CONFIG_HPP
#define RISKCAST_CONFIG_HPP

#include <cstdint>
#include <string>

#include "riskcast/metrics.hpp"
#include "riskcast/train.hpp"

// Run configuration document. A run config is a JSON object with the
// optional sections "model", "window", "augment", "train", "synth",
// "metrics" and "bench"; every field has a default, so {} is a complete
// config. Unknown keys anywhere are rejected with the offending path.
// The effective (default-merged) document is what dump_run_config
// returns and what commands echo into their output directories.
namespace riskcast {

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t rows = 4;
  std::size_t cols = 4;
  std::size_t slots = 2000;
  std::size_t channels = 2;
};

struct BenchConfig {
  std::size_t d_model = 512;
  std::size_t batch = 32;
  int basis_count = 8;
  int degree = 3;
  std::size_t repeats = 30;
  std::size_t warmup = 5;
  std::uint64_t seed = 0;
};

struct RunConfig {
  TrainConfig train;  // carries model, window and augment sections
  SynthConfig synth;
  TopKConfig metrics;
  BenchConfig bench;
};

void validate_run_config(const RunConfig& cfg);

// Defaults merged with the overrides in text. Throws std::invalid_argument
// for unknown keys, wrong types or out-of-range values and
// std::runtime_error for malformed JSON.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Effective config document, sorted keys, trailing newline.
std::string dump_run_config(const RunConfig& cfg);
void write_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace riskcast

#endif  // RISKCAST_CONFIG_HPP
