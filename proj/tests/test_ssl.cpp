#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "riskcast/rng.hpp"
#include "riskcast/ssl.hpp"

using namespace riskcast;

namespace {

Tensor random_tensor(SplitMix64& rng, std::vector<std::size_t> shape, double span) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-span, span);
  return t;
}

Tensor eye(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at2(i, i) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("fusion gates mix the two embeddings") {
  SplitMix64 rng(61);
  Tensor m = random_tensor(rng, {3, 4}, 1.0);
  Tensor mt = random_tensor(rng, {3, 4}, 1.0);

  ad::Tape tp;
  ad::Var v1 = fuse_embeddings(tp.leaf(m), tp.leaf(mt), tp.leaf(Tensor::full({4}, 1.0)),
                               tp.leaf(Tensor::zeros({4})));
  for (std::size_t i = 0; i < m.numel(); ++i) CHECK(v1.value().data()[i] == m.data()[i]);

  ad::Var v2 = fuse_embeddings(tp.leaf(m), tp.leaf(mt), tp.leaf(Tensor::full({4}, 1.0)),
                               tp.leaf(Tensor::full({4}, 1.0)));
  for (std::size_t i = 0; i < m.numel(); ++i)
    CHECK(v2.value().data()[i] == m.data()[i] + mt.data()[i]);

  Tensor m1({1, 2}), mt1({1, 2}), w1({2}), w2({2});
  m1.at(0) = 2.0;
  m1.at(1) = 3.0;
  mt1.at(0) = 1.0;
  mt1.at(1) = 1.0;
  w1.at(0) = 1.0;
  w2.at(1) = 2.0;
  ad::Var v3 = fuse_embeddings(tp.leaf(m1), tp.leaf(mt1), tp.leaf(w1), tp.leaf(w2));
  CHECK(v3.value().at(0) == 2.0);
  CHECK(v3.value().at(1) == 2.0);
}

TEST_CASE("autoencoder shapes and fixtures") {
  SplitMix64 rng(62);
  const std::size_t N = 3, D = 4;
  Tensor v = random_tensor(rng, {N, D}, 1.0);

  ad::Tape tp;
  AutoencodeOut ident =
      autoencode(tp.leaf(v), tp.leaf(eye(D)), tp.leaf(Tensor::zeros({D})),
                 tp.leaf(eye(D)), tp.leaf(Tensor::zeros({D})));
  CHECK(ident.dlat.value().dim(0) == D);
  CHECK(ident.dlat.value().dim(1) == N);
  for (std::size_t i = 0; i < v.numel(); ++i)
    CHECK(ident.vprime.value().data()[i] == v.data()[i]);

  AutoencodeOut zero =
      autoencode(tp.leaf(Tensor::zeros({N, D})), tp.leaf(random_tensor(rng, {D, 2}, 1.0)),
                 tp.leaf(Tensor::zeros({2})), tp.leaf(random_tensor(rng, {2, D}, 1.0)),
                 tp.leaf(Tensor::zeros({D})));
  for (std::size_t i = 0; i < zero.vprime.value().numel(); ++i)
    CHECK(zero.vprime.value().data()[i] == 0.0);

  AutoencodeOut one = autoencode(tp.leaf(Tensor::full({1, 1}, 3.0)),
                                 tp.leaf(Tensor::full({1, 1}, 2.0)),
                                 tp.leaf(Tensor::zeros({1})),
                                 tp.leaf(Tensor::full({1, 1}, 0.5)),
                                 tp.leaf(Tensor::zeros({1})));
  CHECK(one.dlat.value().at(0) == 6.0);
  CHECK(one.vprime.value().at(0) == 3.0);
}

TEST_CASE("reconstruction loss is a per-region mean") {
  SplitMix64 rng(63);
  Tensor v = random_tensor(rng, {2, 3}, 1.0);
  ad::Tape tp;
  CHECK(reconstruction_loss(tp.leaf(v), tp.leaf(v)).value().at(0) == 0.0);

  Tensor v1({1, 3}), v2({1, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    v1.at(i) = rng.uniform();
    v2.at(i) = v1.at(i) + 1.0;
  }
  CHECK(reconstruction_loss(tp.leaf(v1), tp.leaf(v2)).value().at(0) ==
        doctest::Approx(3.0).epsilon(1e-12));

  // Duplicating identical rows leaves the mean unchanged.
  Tensor d1({2, 3}), d2({2, 3});
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 3; ++i) {
      d1.at2(r, i) = v1.at(i);
      d2.at2(r, i) = v2.at(i);
    }
  CHECK(reconstruction_loss(tp.leaf(d1), tp.leaf(d2)).value().at(0) ==
        reconstruction_loss(tp.leaf(v1), tp.leaf(v2)).value().at(0));
}

TEST_CASE("jacobi eigensolver on known matrices") {
  Tensor d({3, 3});
  d.at2(0, 0) = 3.0;
  d.at2(1, 1) = 1.0;
  d.at2(2, 2) = 2.0;
  EigResult e = jacobi_eigen(d);
  CHECK(e.values[0] == 3.0);
  CHECK(e.values[1] == 2.0);
  CHECK(e.values[2] == 1.0);
  CHECK(e.vectors.at2(0, 0) == 1.0);
  CHECK(e.vectors.at2(2, 1) == 1.0);
  CHECK(e.vectors.at2(1, 2) == 1.0);

  // Identity: degenerate spectrum, ties keep column order.
  EigResult id = jacobi_eigen(eye(2));
  CHECK(id.values[0] == 1.0);
  CHECK(id.values[1] == 1.0);
  CHECK(id.vectors.at2(0, 0) == 1.0);
  CHECK(id.vectors.at2(1, 1) == 1.0);

  Tensor s({2, 2});
  s.at2(0, 0) = 2.0;
  s.at2(0, 1) = 1.0;
  s.at2(1, 0) = 1.0;
  s.at2(1, 1) = 2.0;
  EigResult es = jacobi_eigen(s);
  CHECK(es.values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(es.values[1] == doctest::Approx(1.0).epsilon(1e-12));
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(es.vectors.at2(0, 0) == doctest::Approx(r).epsilon(1e-12));
  CHECK(es.vectors.at2(1, 0) == doctest::Approx(r).epsilon(1e-12));
  // Sign rule: first largest-magnitude entry positive.
  CHECK(es.vectors.at2(0, 1) == doctest::Approx(r).epsilon(1e-12));
  CHECK(es.vectors.at2(1, 1) == doctest::Approx(-r).epsilon(1e-12));

  CHECK_THROWS(jacobi_eigen(Tensor({2, 3})));
  Tensor asym({2, 2});
  asym.at2(0, 1) = 1.0;
  CHECK_THROWS(jacobi_eigen(asym));
}

TEST_CASE("jacobi satisfies eigenpair residuals and matches bisection") {
  SplitMix64 rng(64);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    Tensor a({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        const double v = rng.uniform(-2.0, 2.0);
        a.at2(i, j) = v;
        a.at2(j, i) = v;
      }
    EigResult e = jacobi_eigen(a);
    double trace = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      trace += a.at2(i, i);
      sum += e.values[i];
      CHECK((i == 0 || e.values[i] <= e.values[i - 1]));
    }
    CHECK(sum == doctest::Approx(trace).epsilon(1e-10));
    // A v = lambda v per column.
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        double av = 0.0;
        for (std::size_t k = 0; k < n; ++k) av += a.at2(i, k) * e.vectors.at2(k, j);
        CHECK(av == doctest::Approx(e.values[j] * e.vectors.at2(i, j))
                        .epsilon(1e-10)
                        .scale(1.0));
      }
    // Independent oracle: inertia bisection, ascending order.
    std::vector<double> bi = oracle::eig_bisect(a);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(e.values[i] == doctest::Approx(bi[n - 1 - i]).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("cluster indicator is orthonormal and tie-stable") {
  // Dlat = I2: both eigenvalues equal, tie-break picks the first axis.
  Tensor f = update_cluster_indicator(eye(2), 1);
  CHECK(f.at2(0, 0) == 1.0);
  CHECK(f.at2(1, 0) == 0.0);
  CHECK_THROWS(update_cluster_indicator(eye(2), 3));
  CHECK_THROWS(update_cluster_indicator(eye(2), 0));

  SplitMix64 rng(65);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.below(3), n = 3 + rng.below(4);
    const std::size_t k = 1 + rng.below(n);
    Tensor dlat = random_tensor(rng, {d, n}, 1.5);
    Tensor ff = update_cluster_indicator(dlat, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r) dot += ff.at2(r, i) * ff.at2(r, j);
        CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-8);
      }
  }
}

TEST_CASE("kmeans loss equals the unexplained spectrum") {
  ad::Tape tp;
  Tensor i2 = eye(2);
  ad::Var l = kmeans_loss(tp.leaf(i2), update_cluster_indicator(i2, 1));
  CHECK(l.value().at(0) == 1.0);  // trace 2 minus top eigenvalue 1

  SplitMix64 rng(66);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.below(3), n = 3 + rng.below(4);
    const std::size_t k = 1 + rng.below(n);
    Tensor dlat = random_tensor(rng, {d, n}, 1.5);
    Tensor f = update_cluster_indicator(dlat, k);
    ad::Tape t2;
    const double loss = kmeans_loss(t2.leaf(dlat), f).value().at(0);
    CHECK(loss >= -1e-10);

    // Independent eigenvalue oracle on the Gram matrix.
    Tensor gram({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t r = 0; r < d; ++r) acc += dlat.at2(r, i) * dlat.at2(r, j);
        gram.at2(i, j) = acc;
      }
    std::vector<double> eig = oracle::eig_bisect(gram);  // ascending
    double want = 0.0;
    for (std::size_t i = 0; i < n; ++i) want += gram.at2(i, i);
    for (std::size_t i = 0; i < k; ++i) want -= eig[n - 1 - i];
    CHECK(loss == doctest::Approx(want).epsilon(1e-8).scale(1.0));

    // Full spectrum captured at k = n.
    ad::Tape t3;
    CHECK(std::abs(kmeans_loss(t3.leaf(dlat), update_cluster_indicator(dlat, n))
                       .value()
                       .at(0)) < 1e-8);
  }
}

TEST_CASE("bilinear scores fixtures") {
  Tensor m({1, 1, 2}), mt({1, 1, 2}), wb({2, 2});
  m.at3(0, 0, 0) = 1.0;
  mt.at3(0, 0, 1) = 1.0;
  wb.at2(0, 1) = 1.0;
  wb.at2(1, 0) = 1.0;
  BilinearScores s = bilinear_scores(m, mt, wb);
  CHECK(s.zpos.at2(0, 0) == 1.0);

  SplitMix64 rng(67);
  const std::size_t T = 3, N = 2, D = 4;
  Tensor mr = random_tensor(rng, {T, N, D}, 1.0);
  Tensor mtr = random_tensor(rng, {T, N, D}, 1.0);
  BilinearScores si = bilinear_scores(mr, mtr, eye(D));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t n = 0; n < N; ++n) {
      double dot = 0.0;
      for (std::size_t d = 0; d < D; ++d) dot += mr.at3(t, n, d) * mtr.at3(t, n, d);
      CHECK(si.zpos.at2(t, n) == doctest::Approx(dot).epsilon(1e-12));
      CHECK(si.zneg.at3(t, t, n) == si.zpos.at2(t, n));
    }

  BilinearScores sz = bilinear_scores(Tensor::zeros({T, N, D}), mtr,
                                      random_tensor(rng, {D, D}, 1.0));
  for (std::size_t i = 0; i < sz.zneg.numel(); ++i) CHECK(sz.zneg.data()[i] == 0.0);
}

TEST_CASE("contrastive loss analytic fixtures") {
  // One negative with equal scores: ln 2.
  Tensor zpos = Tensor::full({2, 1}, 0.7);
  Tensor zneg = Tensor::full({2, 2, 1}, 0.7);
  CHECK(temporal_contrastive_loss(zpos, zneg, 1.0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-10));

  // Three negatives, all equal: ln 4.
  CHECK(temporal_contrastive_loss(Tensor::full({4, 1}, -0.3),
                                  Tensor::full({4, 4, 1}, -0.3), 1.0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-10));

  // Dominant positive: loss collapses toward zero.
  Tensor zp = Tensor::full({2, 1}, 10.0);
  Tensor zn = Tensor::full({2, 2, 1}, -10.0);
  CHECK(temporal_contrastive_loss(zp, zn, 1.0) < 1e-8);
  CHECK(temporal_contrastive_loss(zp, zn, 1.0) > 0.0);

  CHECK_THROWS(temporal_contrastive_loss(Tensor({1, 1}), Tensor({1, 1, 1}), 1.0));
  CHECK_THROWS(temporal_contrastive_loss(zpos, zneg, 0.0));
}

TEST_CASE("contrastive loss is monotone in its scores") {
  SplitMix64 rng(68);
  Tensor zpos = random_tensor(rng, {3, 2}, 1.0);
  Tensor zneg = random_tensor(rng, {3, 3, 2}, 1.0);
  const double base = temporal_contrastive_loss(zpos, zneg, 0.5);
  CHECK(base > 0.0);

  Tensor up = zpos;
  up.at2(1, 0) += 1e-4;
  CHECK(temporal_contrastive_loss(up, zneg, 0.5) < base);

  Tensor nup = zneg;
  nup.at3(1, 2, 0) += 1e-4;
  CHECK(temporal_contrastive_loss(zpos, nup, 0.5) > base);
}

TEST_CASE("tape scores match the plain bilinear path") {
  SplitMix64 rng(69);
  SeqMeta meta{1, 3, 2};
  const std::size_t D = 4;
  Tensor m = random_tensor(rng, {meta.T, meta.N, D}, 1.0);
  Tensor mt = random_tensor(rng, {meta.T, meta.N, D}, 1.0);
  Tensor wb = random_tensor(rng, {D, D}, 1.0);
  BilinearScores plain = bilinear_scores(m, mt, wb);

  Tensor mseq({meta.rows(), D}), mtseq({meta.rows(), D});
  std::memcpy(mseq.data(), m.data(), sizeof(double) * m.numel());
  std::memcpy(mtseq.data(), mt.data(), sizeof(double) * mt.numel());
  ad::Tape tp;
  ad::Var p = ad::matmul(tp.leaf(mseq), tp.leaf(wb));
  ad::Var grid = pair_scores(p, tp.leaf(mtseq), meta);
  REQUIRE(grid.value().numel() == plain.zneg.numel());
  CHECK(std::memcmp(grid.value().data(), plain.zneg.data(),
                    sizeof(double) * plain.zneg.numel()) == 0);

  ad::Var nce = info_nce(grid, meta, 0.5);
  CHECK(nce.value().at(0) == temporal_contrastive_loss(plain.zpos, plain.zneg, 0.5));
}

TEST_CASE("batched infonce averages per-window losses") {
  SplitMix64 rng(70);
  SeqMeta meta{2, 3, 2};
  const std::size_t D = 3;
  Tensor mseq = random_tensor(rng, {meta.rows(), D}, 1.0);
  Tensor mtseq = random_tensor(rng, {meta.rows(), D}, 1.0);
  Tensor wb = random_tensor(rng, {D, D}, 1.0);

  ad::Tape tp;
  ad::Var nce = info_nce(pair_scores(ad::matmul(tp.leaf(mseq), tp.leaf(wb)),
                                     tp.leaf(mtseq), meta),
                         meta, 0.5);

  double want = 0.0;
  for (std::size_t w = 0; w < meta.batch; ++w) {
    Tensor m({meta.T, meta.N, D}), mt({meta.T, meta.N, D});
    for (std::size_t t = 0; t < meta.T; ++t)
      for (std::size_t n = 0; n < meta.N; ++n)
        for (std::size_t d = 0; d < D; ++d) {
          m.at3(t, n, d) = mseq.at2((w * meta.T + t) * meta.N + n, d);
          mt.at3(t, n, d) = mtseq.at2((w * meta.T + t) * meta.N + n, d);
        }
    BilinearScores s = bilinear_scores(m, mt, wb);
    want += temporal_contrastive_loss(s.zpos, s.zneg, 0.5);
  }
  want /= static_cast<double>(meta.batch);
  CHECK(nce.value().at(0) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("ssl gradients pass the finite-difference check") {
  SplitMix64 rng(71);

  SUBCASE("spatial branch") {
    const std::size_t N = 3, D = 4, dlatdim = 2;
    ParamStore ps;
    ps.add("m", random_tensor(rng, {N, D}, 1.0));
    ps.add("mt", random_tensor(rng, {N, D}, 1.0));
    ps.add("w1", random_tensor(rng, {D}, 1.0));
    ps.add("w2", random_tensor(rng, {D}, 1.0));
    ps.add("enc", random_tensor(rng, {D, dlatdim}, 1.0));
    ps.add("benc", random_tensor(rng, {dlatdim}, 0.5));
    ps.add("dec", random_tensor(rng, {dlatdim, D}, 1.0));
    ps.add("bdec", random_tensor(rng, {D}, 0.5));

    // F frozen from the unperturbed forward, matching the stop-gradient.
    Tensor f;
    {
      ad::Tape tp;
      ad::Var v = fuse_embeddings(tp.leaf(ps.get("m").value), tp.leaf(ps.get("mt").value),
                                  tp.leaf(ps.get("w1").value), tp.leaf(ps.get("w2").value));
      AutoencodeOut ae = autoencode(v, tp.leaf(ps.get("enc").value),
                                    tp.leaf(ps.get("benc").value),
                                    tp.leaf(ps.get("dec").value),
                                    tp.leaf(ps.get("bdec").value));
      f = update_cluster_indicator(ae.dlat.value(), 2);
    }
    auto spatial = [&](bool with_grad) {
      ad::Tape tp;
      ad::LeafSet leaves;
      ad::Var v = fuse_embeddings(leaves.bind(tp, ps.get("m")), leaves.bind(tp, ps.get("mt")),
                                  leaves.bind(tp, ps.get("w1")),
                                  leaves.bind(tp, ps.get("w2")));
      AutoencodeOut ae =
          autoencode(v, leaves.bind(tp, ps.get("enc")), leaves.bind(tp, ps.get("benc")),
                     leaves.bind(tp, ps.get("dec")), leaves.bind(tp, ps.get("bdec")));
      ad::Var loss =
          ad::add(reconstruction_loss(v, ae.vprime), kmeans_loss(ae.dlat, f));
      if (with_grad) {
        tp.backward(loss);
        leaves.harvest();
      }
      return loss.value().at(0);
    };
    CHECK(ad::grad_check(spatial, ps, 1e-5) < 1e-4);
  }

  SUBCASE("temporal branch") {
    SeqMeta meta{1, 3, 2};
    const std::size_t D = 3;
    ParamStore ps;
    ps.add("mseq", random_tensor(rng, {meta.rows(), D}, 1.0));
    ps.add("mtseq", random_tensor(rng, {meta.rows(), D}, 1.0));
    ps.add("wb", random_tensor(rng, {D, D}, 1.0));
    auto temporal = [&](bool with_grad) {
      ad::Tape tp;
      ad::LeafSet leaves;
      ad::Var p = ad::matmul(leaves.bind(tp, ps.get("mseq")), leaves.bind(tp, ps.get("wb")));
      ad::Var loss = info_nce(pair_scores(p, leaves.bind(tp, ps.get("mtseq")), meta),
                              meta, 0.5);
      if (with_grad) {
        tp.backward(loss);
        leaves.harvest();
      }
      return loss.value().at(0);
    };
    CHECK(ad::grad_check(temporal, ps, 1e-5) < 1e-4);
  }
}
