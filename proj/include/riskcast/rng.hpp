#pragma once
#include <cstdint>

// SplitMix64 generator and stateless substream derivation.
//
// Every random decision in the project draws from a substream identified by
// (seed, tag, index). Substreams are derived arithmetically, never by
// consuming draws from a parent stream, so any component can be replayed in
// isolation. The exact derivation is part of the reproducibility contract
// and is documented in the README.
namespace riskcast {

// Output scrambler of SplitMix64. derive() and the generator share it.
std::uint64_t mix64(std::uint64_t z);

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform on [0,1), 53 mantissa bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller using two draws, cosine branch only.
  double normal();

  // Uniform integer in [0, n). Widening-multiply reduction.
  std::uint64_t below(std::uint64_t n);

  // Knuth's product-of-uniforms method. Intended for small rates.
  int poisson(double lambda);

 private:
  std::uint64_t state_;
};

enum class StreamTag : std::uint64_t {
  Init = 1,      // parameter initialization, index = parameter ordinal
  Shuffle = 2,   // epoch shuffling, index = epoch
  Augment = 3,   // per-window augmentation, index = packed (epoch,batch,slot)
  SynthArch = 4, // archetype shuffle, index = 0
  SynthRates = 5,// per-region rate jitter, index = region
  SynthEvents = 6, // per-region event draws, index = region
  Fixture = 7    // test fixtures
};

// derived_state = mix64(mix64(seed ^ 0x9E3779B97F4A7C15*tag) ^ 0xBF58476D1CE4E5B9*index)
std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index);

SplitMix64 substream(std::uint64_t seed, StreamTag tag, std::uint64_t index);

}  // namespace riskcast
