#include <doctest.h>

#include <cmath>

#include "riskcast/rng.hpp"
#include "riskcast/tape.hpp"

using namespace riskcast;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Tensor t(shape);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("forward values of basic ops") {
  ad::Tape t;
  ad::Var a = t.leaf(Tensor::from({2, 2}, {1, 2, 3, 4}));
  ad::Var b = t.leaf(Tensor::from({2, 2}, {5, 6, 7, 8}));
  CHECK(ad::add(a, b).value().at(3) == 12.0);
  CHECK(ad::sub(a, b).value().at(0) == -4.0);
  CHECK(ad::mul(a, b).value().at(1) == 12.0);
  ad::Var m = ad::matmul(a, b);
  CHECK(m.value().at2(0, 0) == 19.0);
  CHECK(m.value().at2(1, 1) == 50.0);
  CHECK(ad::sum(a).value().at(0) == 10.0);
  CHECK(ad::sumsq(a).value().at(0) == 30.0);
  CHECK(ad::mean(a).value().at(0) == 2.5);
  CHECK(ad::transpose(a).value().at2(0, 1) == 3.0);
  CHECK(ad::row_sum(a).value().at(1) == 7.0);
}

TEST_CASE("activation values") {
  ad::Tape t;
  ad::Var x = t.leaf(Tensor::from({4}, {1.0, 50.0, -50.0, 0.0}));
  ad::Var s = ad::silu(x);
  CHECK(s.value().at(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(s.value().at(1) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(std::abs(s.value().at(2)) < 1e-18);
  CHECK(s.value().at(3) == 0.0);

  // silu is bounded below by its global minimum near -0.2785.
  for (double v = -20.0; v <= 20.0; v += 0.01) {
    CHECK(ad::silu_scalar(v) >= -0.2785);
  }

  ad::Var sp = ad::softplus(x);
  CHECK(sp.value().at(3) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(sp.value().at(1) == doctest::Approx(50.0).epsilon(1e-12));

  ad::Var r = ad::relu(t.leaf(Tensor::from({2}, {-1.0, 2.0})));
  CHECK(r.value().at(0) == 0.0);
  CHECK(r.value().at(1) == 2.0);
}

TEST_CASE("square function gradient is near exact") {
  ParamStore ps;
  Param& w = ps.add("w", Tensor::from({1}, {3.0}));
  auto f = [&](bool with_grad) {
    ad::Tape t;
    ad::LeafSet leaves;
    ad::Var v = leaves.bind(t, w);
    ad::Var loss = ad::sumsq(v);
    if (with_grad) {
      t.backward(loss);
      leaves.harvest();
    }
    return loss.value().at(0);
  };
  double err = ad::grad_check(f, ps, 1e-5);
  CHECK(err < 1e-8);
  CHECK(w.grad.at(0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("constant loss has zero gradient error") {
  ParamStore ps;
  ps.add("w", Tensor::from({3}, {1.0, -1.0, 0.5}));
  auto f = [&](bool) { return 4.5; };
  CHECK(ad::grad_check(f, ps, 1e-5) == 0.0);
}

TEST_CASE("composite graph passes grad check") {
  ParamStore ps;
  Param& w1 = ps.add("w1", random_tensor({3, 4}, 1));
  Param& w2 = ps.add("w2", random_tensor({4, 2}, 2));
  Param& b = ps.add("b", random_tensor({2}, 3));
  Param& wr = ps.add("wr", random_tensor({4}, 9));
  Tensor x = random_tensor({5, 3}, 4);
  Tensor target = random_tensor({5, 2}, 5);

  auto f = [&](bool with_grad) {
    ad::Tape t;
    ad::LeafSet leaves;
    ad::Var v1 = leaves.bind(t, w1);
    ad::Var v2 = leaves.bind(t, w2);
    ad::Var vb = leaves.bind(t, b);
    ad::Var vr = leaves.bind(t, wr);
    ad::Var h = ad::silu(ad::matmul(t.leaf(x), v1));
    h = ad::mul_row(h, vr);
    ad::Var pred = ad::add_row(ad::matmul(h, v2), vb);
    ad::Var d = ad::sub_const(pred, target);
    // Reuse d twice to exercise fan-out accumulation.
    ad::Var loss = ad::scale(ad::sum(ad::mul(d, d)), 0.5);
    if (with_grad) {
      t.backward(loss);
      leaves.harvest();
    }
    return loss.value().at(0);
  };
  CHECK(ad::grad_check(f, ps, 1e-5) < 1e-7);
}

TEST_CASE("slice gather reshape and relu pass grad check") {
  ParamStore ps;
  Param& w = ps.add("w", random_tensor({6, 3}, 11));
  auto f = [&](bool with_grad) {
    ad::Tape t;
    ad::LeafSet leaves;
    ad::Var v = leaves.bind(t, w);
    ad::Var s = ad::slice_rows(v, 1, 5);
    ad::Var g = ad::gather_rows(v, {0, 5, 0});
    ad::Var r = ad::reshape(ad::relu(s), {2, 6});
    ad::Var loss = ad::add(ad::sumsq(r), ad::sumsq(g));
    if (with_grad) {
      t.backward(loss);
      leaves.harvest();
    }
    return loss.value().at(0);
  };
  CHECK(ad::grad_check(f, ps, 1e-5) < 1e-6);
}

TEST_CASE("tape guards misuse") {
  ad::Tape t;
  ad::Var a = t.leaf(Tensor::zeros({2, 2}), true);
  CHECK_THROWS(ad::add(a, t.leaf(Tensor::zeros({3}))));
  CHECK_THROWS(t.backward(a));  // non-scalar root
  ad::Tape t2;
  ad::Var b = t2.leaf(Tensor::zeros({2, 2}));
  CHECK_THROWS(ad::add(a, b));  // different tapes

  ad::Var loss = ad::sum(a);
  t.backward(loss);
  CHECK_THROWS(t.backward(loss));  // backward runs once
}

TEST_CASE("gradients of unused constants are not allocated") {
  ad::Tape t;
  ad::Var c = t.leaf(Tensor::from({2}, {1, 2}), false);
  ad::Var p = t.leaf(Tensor::from({2}, {3, 4}), true);
  ad::Var loss = ad::sum(ad::mul(c, p));
  t.backward(loss);
  CHECK(p.grad().at(0) == 1.0);
  CHECK(p.grad().at(1) == 2.0);
  CHECK_THROWS(c.grad());
}
