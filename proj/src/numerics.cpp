#include "riskcast/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace riskcast {

std::vector<double> softmax(const std::vector<double>& v) {
  require(!v.empty(), "softmax of empty vector");
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

double logsumexp(const std::vector<double>& v) {
  require(!v.empty(), "logsumexp of empty vector");
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

}  // namespace riskcast
