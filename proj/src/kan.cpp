#include "riskcast/kan.hpp"

#include <cmath>

#include "riskcast/kernels.hpp"
#include "riskcast/rng.hpp"

namespace riskcast {
namespace {

void validate_layer(const KanLayer& l, const SplineGrid& grid) {
  require(l.w_base.rank() == 2, "kan w_base must be rank 2");
  require(l.w_spline.rank() == 2, "kan w_spline must be rank 2");
  require(l.bias.rank() == 1, "kan bias must be rank 1");
  const std::size_t d_in = l.w_base.dim(0), d_out = l.w_base.dim(1);
  const std::size_t K = static_cast<std::size_t>(grid.basis_count);
  require(l.w_spline.dim(0) == d_in * K,
          "kan w_spline rows must equal d_in * basis_count");
  require(l.w_spline.dim(1) == d_out, "kan w_spline cols must equal d_out");
  require(l.bias.dim(0) == d_out, "kan bias length must equal d_out");
}

}  // namespace

void validate_stack(const KanStack& s) {
  require(!s.layers.empty(), "kan stack must contain at least one layer");
  for (const auto& l : s.layers) validate_layer(l, s.grid);
  for (std::size_t i = 0; i + 1 < s.layers.size(); ++i) {
    require(s.layers[i].w_base.dim(1) == s.layers[i + 1].w_base.dim(0),
            "kan stack dimension chain broken between layers " + std::to_string(i) +
                " and " + std::to_string(i + 1));
  }
}

std::size_t kan_in_dim(const KanStack& s) { return s.layers.front().w_base.dim(0); }
std::size_t kan_out_dim(const KanStack& s) { return s.layers.back().w_base.dim(1); }

ad::Var ekan_layer(ad::Var x, ad::Var w_base, ad::Var w_spline, ad::Var bias,
                   const SplineGrid& grid) {
  ad::Var s = ad::silu(x);
  ad::Var e = spline_expand(x, grid);
  ad::Var m1 = ad::matmul(s, w_base);
  ad::Var m2 = ad::matmul(e, w_spline);
  return ad::add_row(ad::add(m1, m2), bias);
}

Tensor ekan_forward(const KanStack& s, const Tensor& x) {
  validate_stack(s);
  require(x.rank() == 2, "ekan_forward expects rank 2 input");
  require(x.dim(1) == kan_in_dim(s), "ekan_forward input dim mismatch");
  Tensor cur = x;
  for (const auto& l : s.layers) {
    const std::size_t m = cur.dim(0), d_in = l.w_base.dim(0), d_out = l.w_base.dim(1);
    Tensor sv({m, d_in});
    for (std::size_t i = 0; i < sv.numel(); ++i) sv.at(i) = ad::silu_scalar(cur.at(i));
    Tensor e = spline_expand_value(cur, s.grid);
    Tensor m1({m, d_out});
    kernels::matmul_accum(sv.data(), l.w_base.data(), m1.data(), m, d_in, d_out);
    Tensor m2({m, d_out});
    kernels::matmul_accum(e.data(), l.w_spline.data(), m2.data(), m, e.dim(1), d_out);
    Tensor y({m, d_out});
    kernels::ops().add(m1.data(), m2.data(), y.data(), y.numel());
    for (std::size_t r = 0; r < m; ++r) {
      kernels::ops().add(y.data() + r * d_out, l.bias.data(), y.data() + r * d_out, d_out);
    }
    cur = std::move(y);
  }
  return cur;
}

namespace {

// One naive layer on plain tensors. Evaluates the basis and silu once per
// (output, input) edge and materializes the per-edge products for one
// sample at a time.
Tensor naive_layer_value(const Tensor& x, const Tensor& w_base, const Tensor& w_spline,
                         const Tensor& bias, const SplineGrid& grid) {
  const std::size_t m = x.dim(0), d_in = w_base.dim(0), d_out = w_base.dim(1);
  const std::size_t K = static_cast<std::size_t>(grid.basis_count);
  Tensor y({m, d_out});
  Tensor edge({d_out, d_in * K});
  std::vector<double> B(K);
  for (std::size_t b = 0; b < m; ++b) {
    for (std::size_t o = 0; o < d_out; ++o) {
      for (std::size_t i = 0; i < d_in; ++i) {
        spline_basis(grid, x.at2(b, i), B.data());
        for (std::size_t k = 0; k < K; ++k) {
          edge.at2(o, i * K + k) = B[k] * w_spline.at2(i * K + k, o);
        }
      }
    }
    for (std::size_t o = 0; o < d_out; ++o) {
      double acc_base = 0.0;
      for (std::size_t i = 0; i < d_in; ++i) {
        acc_base += ad::silu_scalar(x.at2(b, i)) * w_base.at2(i, o);
      }
      double acc_spline = 0.0;
      for (std::size_t ik = 0; ik < d_in * K; ++ik) {
        acc_spline += edge.at2(o, ik);
      }
      y.at2(b, o) = (acc_base + acc_spline) + bias.at(o);
    }
  }
  return y;
}

}  // namespace

Tensor naive_kan_forward(const KanStack& s, const Tensor& x) {
  validate_stack(s);
  require(x.rank() == 2, "naive_kan_forward expects rank 2 input");
  require(x.dim(1) == kan_in_dim(s), "naive_kan_forward input dim mismatch");
  Tensor cur = x;
  for (const auto& l : s.layers) {
    cur = naive_layer_value(cur, l.w_base, l.w_spline, l.bias, s.grid);
  }
  return cur;
}

ad::Var naive_kan_layer(ad::Var x, ad::Var w_base, ad::Var w_spline, ad::Var bias,
                        const SplineGrid& grid) {
  Tensor out = naive_layer_value(x.value(), w_base.value(), w_spline.value(),
                                 bias.value(), grid);
  ad::Tape* t = x.tape();
  const int ix = x.index(), iwb = w_base.index(), iws = w_spline.index(), ib = bias.index();
  bool need = t->node(ix).needs_grad || t->node(iwb).needs_grad ||
              t->node(iws).needs_grad || t->node(ib).needs_grad;
  int io = t->add_node(std::move(out), need, nullptr);
  t->node(io).back = [ix, iwb, iws, ib, io, grid](ad::Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    const Tensor& xv = tp.node(ix).value;
    const Tensor& wb = tp.node(iwb).value;
    const Tensor& ws = tp.node(iws).value;
    const std::size_t m = xv.dim(0), d_in = wb.dim(0), d_out = wb.dim(1);
    const std::size_t K = static_cast<std::size_t>(grid.basis_count);
    Tensor* gx = tp.grad_if(ix);
    Tensor* gwb = tp.grad_if(iwb);
    Tensor* gws = tp.grad_if(iws);
    Tensor* gb = tp.grad_if(ib);
    std::vector<double> B(K), dB(K);
    for (std::size_t b = 0; b < m; ++b) {
      for (std::size_t o = 0; o < d_out; ++o) {
        const double go = g.at2(b, o);
        if (gb) gb->at(o) += go;
        for (std::size_t i = 0; i < d_in; ++i) {
          const double xi = xv.at2(b, i);
          spline_basis_deriv(grid, xi, B.data(), dB.data());
          const double sv = ad::silu_scalar(xi);
          if (gwb) gwb->at2(i, o) += go * sv;
          double dx_acc = 0.0;
          if (gx) {
            const double sig = ad::sigmoid(xi);
            dx_acc += wb.at2(i, o) * (sig + xi * sig * (1.0 - sig));
          }
          for (std::size_t k = 0; k < K; ++k) {
            if (gws) gws->at2(i * K + k, o) += go * B[k];
            if (gx) dx_acc += ws.at2(i * K + k, o) * dB[k];
          }
          if (gx) gx->at2(b, i) += go * dx_acc;
        }
      }
    }
  };
  return ad::Var(t, io);
}

KanLayer init_kan_layer(std::size_t d_in, std::size_t d_out, const SplineGrid& grid,
                        SplitMix64& rng) {
  const std::size_t K = static_cast<std::size_t>(grid.basis_count);
  KanLayer l;
  l.w_base = Tensor({d_in, d_out});
  l.w_spline = Tensor({d_in * K, d_out});
  l.bias = Tensor({d_out});
  const double s_base = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
  for (std::size_t i = 0; i < l.w_base.numel(); ++i) l.w_base.at(i) = rng.uniform(-s_base, s_base);
  const double s_spline = 0.5 * std::sqrt(6.0 / static_cast<double>(d_in * K + d_out));
  for (std::size_t i = 0; i < l.w_spline.numel(); ++i) l.w_spline.at(i) = rng.uniform(-s_spline, s_spline);
  return l;
}

}  // namespace riskcast
