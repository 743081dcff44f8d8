#pragma once
#include <vector>

#include "riskcast/tensor.hpp"

namespace riskcast {

// Stable softmax with max subtraction. Errors on empty input.
std::vector<double> softmax(const std::vector<double>& v);

// log(sum(exp(v))) with max subtraction.
double logsumexp(const std::vector<double>& v);

}  // namespace riskcast
