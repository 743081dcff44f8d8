#include "riskcast/ssm.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace riskcast {
namespace {

std::size_t row_of(const SeqMeta& m, std::size_t w, std::size_t t, std::size_t n) {
  return (w * m.T + t) * m.N + n;
}

}  // namespace

ad::Var causal_conv1d(ad::Var x, ad::Var kernels, SeqMeta meta) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  require(xv.rank() == 2 && kv.rank() == 2, "conv1d expects rank 2 tensors");
  require(xv.dim(0) == meta.rows(), "conv1d row count does not match meta");
  require(xv.dim(1) == kv.dim(1), "conv1d channel mismatch");
  const std::size_t width = kv.dim(0), d = xv.dim(1);

  Tensor out(xv.shape());
  for (std::size_t w = 0; w < meta.batch; ++w) {
    for (std::size_t t = 0; t < meta.T; ++t) {
      for (std::size_t n = 0; n < meta.N; ++n) {
        double* orow = out.data() + row_of(meta, w, t, n) * d;
        for (std::size_t tau = 0; tau < width; ++tau) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) -
                                     static_cast<std::ptrdiff_t>(width) + 1 +
                                     static_cast<std::ptrdiff_t>(tau);
          if (src < 0) continue;
          const double* xrow = xv.data() + row_of(meta, w, static_cast<std::size_t>(src), n) * d;
          const double* krow = kv.data() + tau * d;
          for (std::size_t c = 0; c < d; ++c) orow[c] += krow[c] * xrow[c];
        }
      }
    }
  }

  ad::Tape* t = x.tape();
  const int ix = x.index(), ik = kernels.index();
  bool need = t->node(ix).needs_grad || t->node(ik).needs_grad;
  int io = t->add_node(std::move(out), need, nullptr);
  t->node(io).back = [ix, ik, io, meta, width, d](ad::Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    const Tensor& xv2 = tp.node(ix).value;
    const Tensor& kv2 = tp.node(ik).value;
    Tensor* gx = tp.grad_if(ix);
    Tensor* gk = tp.grad_if(ik);
    for (std::size_t w = 0; w < meta.batch; ++w) {
      for (std::size_t t2 = 0; t2 < meta.T; ++t2) {
        for (std::size_t n = 0; n < meta.N; ++n) {
          const double* grow = g.data() + row_of(meta, w, t2, n) * d;
          for (std::size_t tau = 0; tau < width; ++tau) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t2) -
                                       static_cast<std::ptrdiff_t>(width) + 1 +
                                       static_cast<std::ptrdiff_t>(tau);
            if (src < 0) continue;
            const std::size_t srow = row_of(meta, w, static_cast<std::size_t>(src), n) * d;
            for (std::size_t c = 0; c < d; ++c) {
              if (gx) gx->at(srow + c) += kv2.at(tau * d + c) * grow[c];
              if (gk) gk->at(tau * d + c) += xv2.at(srow + c) * grow[c];
            }
          }
        }
      }
    }
  };
  return ad::Var(t, io);
}

ad::Var ssm_scan(ad::Var u, ad::Var delta, ad::Var B, ad::Var C, ad::Var A, ad::Var D,
                 SeqMeta meta) {
  const Tensor& uv = u.value();
  const Tensor& dv = delta.value();
  const Tensor& bv = B.value();
  const Tensor& cv = C.value();
  const Tensor& av = A.value();
  const Tensor& Dv = D.value();
  require(uv.rank() == 2 && uv.dim(0) == meta.rows(), "ssm_scan u rows mismatch");
  const std::size_t d_model = uv.dim(1);
  const std::size_t d_state = av.dim(1);
  require(dv.same_shape(uv), "ssm_scan delta shape mismatch");
  require(bv.dim(0) == meta.rows() && bv.dim(1) == d_state, "ssm_scan B shape mismatch");
  require(cv.same_shape(bv), "ssm_scan C shape mismatch");
  require(av.dim(0) == d_model, "ssm_scan A rows must equal d_model");
  require(Dv.rank() == 1 && Dv.dim(0) == d_model, "ssm_scan D shape mismatch");
  // softplus guarantees this; the check guards direct callers. Zero is
  // tolerated because it can arise from underflow and is still stable.
  for (std::size_t i = 0; i < dv.numel(); ++i) {
    require(dv.at(i) >= 0.0, "ssm_scan requires nonnegative step widths");
  }

  // Hidden states and decay factors are kept for the backward sweep.
  auto hstore = std::make_shared<Tensor>(
      std::vector<std::size_t>{meta.rows(), d_model * d_state});
  auto astore = std::make_shared<Tensor>(
      std::vector<std::size_t>{meta.rows(), d_model * d_state});
  Tensor out({meta.rows(), d_model});

  for (std::size_t w = 0; w < meta.batch; ++w) {
    for (std::size_t n = 0; n < meta.N; ++n) {
      for (std::size_t t2 = 0; t2 < meta.T; ++t2) {
        const std::size_t r = row_of(meta, w, t2, n);
        const std::size_t rp = t2 > 0 ? row_of(meta, w, t2 - 1, n) : 0;
        for (std::size_t c = 0; c < d_model; ++c) {
          const double del = dv.at2(r, c);
          const double uin = uv.at2(r, c);
          double yacc = 0.0;
          for (std::size_t s = 0; s < d_state; ++s) {
            const double abar = std::exp(del * av.at2(c, s));
            const double hprev = t2 > 0 ? hstore->at2(rp, c * d_state + s) : 0.0;
            const double h = abar * hprev + del * bv.at2(r, s) * uin;
            hstore->at2(r, c * d_state + s) = h;
            astore->at2(r, c * d_state + s) = abar;
            yacc += cv.at2(r, s) * h;
          }
          out.at2(r, c) = yacc + Dv.at(c) * uin;
        }
      }
    }
  }

  ad::Tape* t = u.tape();
  const int iu = u.index(), id = delta.index(), ib = B.index(), ic = C.index(),
            ia = A.index(), iD = D.index();
  bool need = false;
  for (int idx : {iu, id, ib, ic, ia, iD}) need = need || t->node(idx).needs_grad;
  int io = t->add_node(std::move(out), need, nullptr);
  t->node(io).back = [=](ad::Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    const Tensor& uv2 = tp.node(iu).value;
    const Tensor& dv2 = tp.node(id).value;
    const Tensor& bv2 = tp.node(ib).value;
    const Tensor& cv2 = tp.node(ic).value;
    const Tensor& av2 = tp.node(ia).value;
    const Tensor& Dv2 = tp.node(iD).value;
    Tensor* gu = tp.grad_if(iu);
    Tensor* gd = tp.grad_if(id);
    Tensor* gb = tp.grad_if(ib);
    Tensor* gc = tp.grad_if(ic);
    Tensor* ga = tp.grad_if(ia);
    Tensor* gD = tp.grad_if(iD);
    std::vector<double> hadj(d_model * d_state);
    for (std::size_t w = 0; w < meta.batch; ++w) {
      for (std::size_t n = 0; n < meta.N; ++n) {
        std::fill(hadj.begin(), hadj.end(), 0.0);
        for (std::size_t t2 = meta.T; t2-- > 0;) {
          const std::size_t r = row_of(meta, w, t2, n);
          const std::size_t rp = t2 > 0 ? row_of(meta, w, t2 - 1, n) : 0;
          for (std::size_t c = 0; c < d_model; ++c) {
            const double gy = g.at2(r, c);
            const double del = dv2.at2(r, c);
            const double uin = uv2.at2(r, c);
            if (gD) gD->at(c) += gy * uin;
            if (gu) gu->at2(r, c) += gy * Dv2.at(c);
            double ddel = 0.0;
            double du_state = 0.0;
            for (std::size_t s = 0; s < d_state; ++s) {
              const std::size_t cs = c * d_state + s;
              const double h = hstore->at2(r, cs);
              const double abar = astore->at2(r, cs);
              const double hprev = t2 > 0 ? hstore->at2(rp, cs) : 0.0;
              double ha = hadj[cs] + gy * cv2.at2(r, s);
              if (gc) gc->at2(r, s) += gy * h;
              if (ga) ga->at2(c, s) += ha * hprev * abar * del;
              ddel += ha * (hprev * abar * av2.at2(c, s) + bv2.at2(r, s) * uin);
              if (gb) gb->at2(r, s) += ha * del * uin;
              du_state += ha * del * bv2.at2(r, s);
              hadj[cs] = ha * abar;
            }
            if (gd) gd->at2(r, c) += ddel;
            if (gu) gu->at2(r, c) += du_state;
          }
        }
      }
    }
  };
  return ad::Var(t, io);
}

Tensor ssm_scan_associative(const Tensor& u, const Tensor& delta, const Tensor& B,
                            const Tensor& C, const Tensor& A, const Tensor& D,
                            SeqMeta meta) {
  const std::size_t d_model = u.dim(1);
  const std::size_t d_state = A.dim(1);
  Tensor out({meta.rows(), d_model});
  // Combine (a2,b2) after (a1,b1): (a2*a1, a2*b1 + b2). h_t is the prefix
  // reduction applied to h_0 = 0, so only the increment term survives.
  std::vector<double> as(meta.T), bs(meta.T);
  for (std::size_t w = 0; w < meta.batch; ++w) {
    for (std::size_t n = 0; n < meta.N; ++n) {
      for (std::size_t c = 0; c < d_model; ++c) {
        std::vector<double> hacc(meta.T * d_state);
        for (std::size_t s = 0; s < d_state; ++s) {
          for (std::size_t t2 = 0; t2 < meta.T; ++t2) {
            const std::size_t r = row_of(meta, w, t2, n);
            as[t2] = std::exp(delta.at2(r, c) * A.at2(c, s));
            bs[t2] = delta.at2(r, c) * B.at2(r, s) * u.at2(r, c);
          }
          // Inclusive prefix by blocked doubling on the pair monoid.
          std::vector<double> pa = as, pb = bs;
          for (std::size_t step = 1; step < meta.T; step <<= 1) {
            std::vector<double> na = pa, nb = pb;
            for (std::size_t t2 = step; t2 < meta.T; ++t2) {
              na[t2] = pa[t2] * pa[t2 - step];
              nb[t2] = pa[t2] * pb[t2 - step] + pb[t2];
            }
            pa.swap(na);
            pb.swap(nb);
          }
          for (std::size_t t2 = 0; t2 < meta.T; ++t2) hacc[t2 * d_state + s] = pb[t2];
        }
        for (std::size_t t2 = 0; t2 < meta.T; ++t2) {
          const std::size_t r = row_of(meta, w, t2, n);
          double yacc = 0.0;
          for (std::size_t s = 0; s < d_state; ++s) yacc += C.at2(r, s) * hacc[t2 * d_state + s];
          out.at2(r, c) = yacc + D.at(c) * u.at2(r, c);
        }
      }
    }
  }
  return out;
}

SsmProjections ssm_projections(ad::Var u, ad::Var w_delta, ad::Var b_delta, ad::Var w_b,
                               ad::Var w_c) {
  SsmProjections out;
  out.delta = ad::softplus(ad::add_row(ad::matmul(u, w_delta), b_delta));
  out.B = ad::matmul(u, w_b);
  out.C = ad::matmul(u, w_c);
  return out;
}

ad::Var ekamba_block(ad::Var h, const EkambaBlockVars& v, const SplineGrid& grid,
                     SeqMeta meta) {
  ad::Var u = causal_conv1d(h, v.conv_k, meta);
  SsmProjections proj = ssm_projections(u, v.w_delta, v.b_delta, v.w_b, v.w_c);
  ad::Var s = ssm_scan(u, proj.delta, proj.B, proj.C, v.A, v.D, meta);
  ad::Var gate = ad::add(ad::silu(s), ad::silu(h));
  return ekan_layer(gate, v.kan_wb, v.kan_ws, v.kan_b, grid);
}

}  // namespace riskcast
