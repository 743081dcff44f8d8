#include "riskcast/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace riskcast {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double SplitMix64::normal() {
  // 1 - u keeps the log argument in (0, 1].
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

std::uint64_t SplitMix64::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below(0)");
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next()) * n) >> 64);
}

int SplitMix64::poisson(double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("poisson rate must be nonnegative");
  if (lambda == 0.0) return 0;
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= uniform();
  } while (p > limit);
  return k - 1;
}

std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
  std::uint64_t a = mix64(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(tag)));
  return mix64(a ^ (0xBF58476D1CE4E5B9ull * index));
}

SplitMix64 substream(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
  return SplitMix64(derive_seed(seed, tag, index));
}

}  // namespace riskcast
