#include "riskcast/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "riskcast/kernels.hpp"
#include "riskcast/numerics.hpp"

namespace riskcast {

ad::Var fuse_embeddings(ad::Var m, ad::Var mt, ad::Var w1, ad::Var w2) {
  return ad::add(ad::mul_row(m, w1), ad::mul_row(mt, w2));
}

AutoencodeOut autoencode(ad::Var v, ad::Var w_enc, ad::Var b_enc, ad::Var w_dec,
                         ad::Var b_dec) {
  ad::Var enc = ad::add_row(ad::matmul(v, w_enc), b_enc);  // N x d_lat
  ad::Var dlat = ad::transpose(enc);
  ad::Var vprime = ad::add_row(ad::matmul(enc, w_dec), b_dec);
  return {dlat, vprime};
}

ad::Var reconstruction_loss(ad::Var v, ad::Var vprime) {
  const Tensor& tv = v.value();
  require(tv.rank() == 2, "reconstruction_loss: v must be rank-2");
  double inv = 1.0 / static_cast<double>(tv.dim(0));
  return ad::scale(ad::sumsq(ad::sub(v, vprime)), inv);
}

EigResult jacobi_eigen(const Tensor& sym) {
  require(sym.rank() == 2 && sym.dim(0) == sym.dim(1),
          "jacobi_eigen: matrix must be square");
  const std::size_t n = sym.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      require(sym.at2(i, j) == sym.at2(j, i), "jacobi_eigen: matrix must be symmetric");

  Tensor a = sym;
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at2(i, i) = 1.0;

  double base_sq = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) base_sq += a.data()[i] * a.data()[i];
  const double stop = 1e-30 * std::max(1.0, base_sq);

  // Cyclic sweeps in fixed (p, q) order keep the result deterministic.
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off_sq += a.at2(i, j) * a.at2(i, j);
    if (off_sq <= stop) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at2(p, q);
        if (apq == 0.0) continue;
        const double app = a.at2(p, p);
        const double aqq = a.at2(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        // Smaller-angle root; safe as theta -> +-inf (t -> 0).
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a.at2(k, p);
          const double akq = a.at2(k, q);
          a.at2(k, p) = c * akp - s * akq;
          a.at2(p, k) = a.at2(k, p);
          a.at2(k, q) = s * akp + c * akq;
          a.at2(q, k) = a.at2(k, q);
        }
        a.at2(p, p) = app - t * apq;
        a.at2(q, q) = aqq + t * apq;
        a.at2(p, q) = 0.0;
        a.at2(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at2(k, p);
          const double vkq = v.at2(k, q);
          v.at2(k, p) = c * vkp - s * vkq;
          v.at2(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a.at2(x, x) > a.at2(y, y);
  });

  EigResult res{std::vector<double>(n), Tensor({n, n})};
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    res.values[j] = a.at2(src, src);
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = std::abs(v.at2(i, src));
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    const double flip = v.at2(arg, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) res.vectors.at2(i, j) = flip * v.at2(i, src);
  }
  return res;
}

Tensor indicator_from_gram(const Tensor& gram, std::size_t k) {
  require(gram.rank() == 2 && gram.dim(0) == gram.dim(1),
          "indicator_from_gram: gram must be square");
  const std::size_t n = gram.dim(0);
  require(k >= 1 && k <= n, "indicator_from_gram: k must be in [1, N]");
  EigResult eig = jacobi_eigen(gram);
  Tensor f({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) f.at2(i, j) = eig.vectors.at2(i, j);
  return f;
}

Tensor gram_of(const Tensor& dlat) {
  require(dlat.rank() == 2, "gram_of: dlat must be rank-2");
  const std::size_t d = dlat.dim(0);
  const std::size_t n = dlat.dim(1);
  Tensor gram({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d; ++r) acc += dlat.at2(r, i) * dlat.at2(r, j);
      gram.at2(i, j) = acc;
      gram.at2(j, i) = acc;
    }
  return gram;
}

Tensor update_cluster_indicator(const Tensor& dlat, std::size_t k) {
  return indicator_from_gram(gram_of(dlat), k);
}

ad::Var kmeans_loss(ad::Var dlat, const Tensor& f) {
  ad::Tape& tp = *dlat.tape();
  const Tensor& dv = dlat.value();
  require(dv.rank() == 2 && f.rank() == 2 && f.dim(0) == dv.dim(1),
          "kmeans_loss: f rows must match dlat columns");
  ad::Var fc = tp.leaf(f, false);
  return ad::sub(ad::sumsq(dlat), ad::sumsq(ad::matmul(dlat, fc)));
}

BilinearScores bilinear_scores(const Tensor& m, const Tensor& mt, const Tensor& wb) {
  require(m.rank() == 3, "bilinear_scores: embeddings must be T x N x D");
  require(m.same_shape(mt), "bilinear_scores: embedding shapes must match");
  const std::size_t T = m.dim(0);
  const std::size_t n = m.dim(1);
  const std::size_t d = m.dim(2);
  require(wb.rank() == 2 && wb.dim(0) == d && wb.dim(1) == d,
          "bilinear_scores: wb must be D x D");
  Tensor p({T * n, d});
  kernels::matmul_accum(m.data(), wb.data(), p.data(), T * n, d, d);
  BilinearScores out{Tensor({T, n}), Tensor({T, T, n})};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t t2 = 0; t2 < T; ++t2)
      for (std::size_t r = 0; r < n; ++r) {
        const double* prow = p.data() + (t * n + r) * d;
        const double* mrow = mt.data() + (t2 * n + r) * d;
        double acc = 0.0;
        for (std::size_t e = 0; e < d; ++e) acc += prow[e] * mrow[e];
        out.zneg.at3(t, t2, r) = acc;
        if (t2 == t) out.zpos.at2(t, r) = acc;
      }
  return out;
}

double temporal_contrastive_loss(const Tensor& zpos, const Tensor& zneg, double tau) {
  require(tau > 0.0, "temporal_contrastive_loss: tau must be positive");
  require(zpos.rank() == 2 && zneg.rank() == 3,
          "temporal_contrastive_loss: zpos T x N, zneg T x T x N");
  const std::size_t T = zpos.dim(0);
  const std::size_t n = zpos.dim(1);
  require(zneg.dim(0) == T && zneg.dim(1) == T && zneg.dim(2) == n,
          "temporal_contrastive_loss: zneg shape mismatch");
  require(T >= 2, "temporal_contrastive_loss: need at least one negative slot");
  std::vector<double> vals;
  vals.reserve(T);
  double acc_t = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    double acc_n = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      vals.clear();
      vals.push_back(zpos.at2(t, r) / tau);
      for (std::size_t t2 = 0; t2 < T; ++t2)
        if (t2 != t) vals.push_back(zneg.at3(t, t2, r) / tau);
      acc_n += logsumexp(vals) - vals[0];
    }
    acc_t += acc_n / static_cast<double>(n);
  }
  return acc_t / static_cast<double>(T);
}

ad::Var pair_scores(ad::Var p, ad::Var mtseq, SeqMeta meta) {
  ad::Tape& tp = *p.tape();
  const Tensor pv = p.value();
  const Tensor mv = mtseq.value();
  require(pv.rank() == 2 && pv.same_shape(mv), "pair_scores: inputs must match, rank-2");
  require(pv.dim(0) == meta.rows(), "pair_scores: rows must equal batch*T*N");
  const std::size_t T = meta.T;
  const std::size_t n = meta.N;
  const std::size_t d = pv.dim(1);
  Tensor out({meta.batch * T * T * n});
  for (std::size_t w = 0; w < meta.batch; ++w)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t t2 = 0; t2 < T; ++t2)
        for (std::size_t r = 0; r < n; ++r) {
          const double* prow = pv.data() + ((w * T + t) * n + r) * d;
          const double* mrow = mv.data() + ((w * T + t2) * n + r) * d;
          double acc = 0.0;
          for (std::size_t e = 0; e < d; ++e) acc += prow[e] * mrow[e];
          out.at(((w * T + t) * T + t2) * n + r) = acc;
        }
  const int ip = p.index();
  const int im = mtseq.index();
  const bool ng = tp.node(ip).needs_grad || tp.node(im).needs_grad;
  const int io = tp.add_node(std::move(out), ng, nullptr);
  if (ng) {
    tp.node(io).back = [io, ip, im, meta, d](ad::Tape& t) {
      const Tensor& g = t.node(io).grad;
      const Tensor& pval = t.node(ip).value;
      const Tensor& mval = t.node(im).value;
      Tensor* gp = t.grad_if(ip);
      Tensor* gm = t.grad_if(im);
      const std::size_t T = meta.T;
      const std::size_t n = meta.N;
      for (std::size_t w = 0; w < meta.batch; ++w)
        for (std::size_t ta = 0; ta < T; ++ta)
          for (std::size_t t2 = 0; t2 < T; ++t2)
            for (std::size_t r = 0; r < n; ++r) {
              const double gz = g.at(((w * T + ta) * T + t2) * n + r);
              if (gz == 0.0) continue;
              const std::size_t rp = (w * T + ta) * n + r;
              const std::size_t rm = (w * T + t2) * n + r;
              if (gp) kernels::ops().axpy(gz, mval.data() + rm * d, gp->data() + rp * d, d);
              if (gm) kernels::ops().axpy(gz, pval.data() + rp * d, gm->data() + rm * d, d);
            }
    };
  }
  return ad::Var(&tp, io);
}

ad::Var info_nce(ad::Var scores, SeqMeta meta, double tau) {
  require(tau > 0.0, "info_nce: tau must be positive");
  ad::Tape& tp = *scores.tape();
  const Tensor sv = scores.value();
  const std::size_t T = meta.T;
  const std::size_t n = meta.N;
  require(sv.rank() == 1 && sv.dim(0) == meta.batch * T * T * n,
          "info_nce: scores must be flat batch*T*T*N");
  require(T >= 2, "info_nce: need at least one negative slot");

  // Anchors enter the mean over n, then t, then windows; each anchor's
  // logit list starts with its positive, matching the plain oracle.
  std::vector<double> vals;
  vals.reserve(T);
  double acc_w = 0.0;
  for (std::size_t w = 0; w < meta.batch; ++w) {
    double acc_t = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      double acc_n = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        vals.clear();
        vals.push_back(sv.at(((w * T + t) * T + t) * n + r) / tau);
        for (std::size_t t2 = 0; t2 < T; ++t2)
          if (t2 != t) vals.push_back(sv.at(((w * T + t) * T + t2) * n + r) / tau);
        acc_n += logsumexp(vals) - vals[0];
      }
      acc_t += acc_n / static_cast<double>(n);
    }
    acc_w += acc_t / static_cast<double>(T);
  }
  Tensor out({1});
  out.at(0) = acc_w / static_cast<double>(meta.batch);

  const int is = scores.index();
  const bool ng = tp.node(is).needs_grad;
  const int io = tp.add_node(std::move(out), ng, nullptr);
  if (ng) {
    tp.node(io).back = [io, is, meta, tau](ad::Tape& t) {
      const double g = t.node(io).grad.at(0);
      Tensor* gs = t.grad_if(is);
      if (!gs || g == 0.0) return;
      const Tensor& sv = t.node(is).value;
      const std::size_t T = meta.T;
      const std::size_t n = meta.N;
      const double coef = g / (static_cast<double>(meta.batch) * static_cast<double>(T) *
                               static_cast<double>(n));
      std::vector<double> vals;
      vals.reserve(T);
      for (std::size_t w = 0; w < meta.batch; ++w)
        for (std::size_t ta = 0; ta < T; ++ta)
          for (std::size_t r = 0; r < n; ++r) {
            vals.clear();
            vals.push_back(sv.at(((w * T + ta) * T + ta) * n + r) / tau);
            for (std::size_t t2 = 0; t2 < T; ++t2)
              if (t2 != ta) vals.push_back(sv.at(((w * T + ta) * T + t2) * n + r) / tau);
            const std::vector<double> prob = softmax(vals);
            // d l / d logit_j = prob_j - [j == positive].
            gs->at(((w * T + ta) * T + ta) * n + r) += coef * (prob[0] - 1.0) / tau;
            std::size_t j = 1;
            for (std::size_t t2 = 0; t2 < T; ++t2) {
              if (t2 == ta) continue;
              gs->at(((w * T + ta) * T + t2) * n + r) += coef * prob[j] / tau;
              ++j;
            }
          }
    };
  }
  return ad::Var(&tp, io);
}

}  // namespace riskcast
