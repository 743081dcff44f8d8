#include <doctest.h>

#include <limits>
#include <stdexcept>

#include "riskcast/tensor.hpp"

using namespace riskcast;

TEST_CASE("tensor shapes and element access") {
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  t.at2(1, 2) = 5.0;
  CHECK(t.at(5) == 5.0);

  Tensor u = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(u.at2(1, 0) == 3.0);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({0, 2}), std::invalid_argument);
}

TEST_CASE("checked mode rejects non-finite entries") {
  CHECK(Tensor::checked());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Tensor::from({2}, {1.0, nan}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from({2}, {inf, 0.0}), std::invalid_argument);
  Tensor::set_checked(false);
  Tensor t = Tensor::from({2}, {1.0, nan});
  CHECK_THROWS_AS(t.assert_finite("test"), std::runtime_error);
  Tensor::set_checked(true);
}

TEST_CASE("allocation accounting tracks live and peak bytes") {
  AllocStats::reset_peak();
  const std::size_t before = AllocStats::current_bytes();
  {
    Tensor big = Tensor::zeros({1000});
    CHECK(AllocStats::current_bytes() >= before + 8000);
    CHECK(AllocStats::peak_bytes() >= before + 8000);
  }
  CHECK(AllocStats::current_bytes() == before);
  CHECK(AllocStats::peak_bytes() >= before + 8000);
  AllocStats::reset_peak();
  CHECK(AllocStats::peak_bytes() == AllocStats::current_bytes());
}

TEST_CASE("transpose copy") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose_copy(a);
  CHECK(t.dim(0) == 3);
  CHECK(t.at2(2, 1) == 6.0);
  CHECK_THROWS_AS(transpose_copy(Tensor::zeros({4})), std::invalid_argument);
}

TEST_CASE("param store keeps insertion order and unique names") {
  ParamStore ps;
  Param& a = ps.add("w1", Tensor::from({2}, {1, 2}));
  ps.add("w2", Tensor::zeros({3}));
  CHECK(ps.size() == 2);
  CHECK(&ps.at(0) == &a);
  CHECK(a.grad.numel() == 2);
  CHECK_THROWS_AS(ps.add("w1", Tensor::zeros({1})), std::invalid_argument);
  CHECK_THROWS_AS(ps.get("nope"), std::invalid_argument);
  a.grad.at(0) = 7.0;
  ps.zero_grads();
  CHECK(a.grad.at(0) == 0.0);
}
