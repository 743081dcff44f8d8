#include "riskcast/graph.hpp"

#include <cmath>

#include "riskcast/kernels.hpp"

namespace riskcast {

Tensor grid_adjacency(std::size_t rows, std::size_t cols) {
  require(rows >= 1 && cols >= 1, "grid dimensions must be positive");
  const std::size_t n = rows * cols;
  Tensor a({n, n});
  auto idx = [cols](std::size_t i, std::size_t j) { return i * cols + j; };
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (i + 1 < rows) {
        a.at2(idx(i, j), idx(i + 1, j)) = 1.0;
        a.at2(idx(i + 1, j), idx(i, j)) = 1.0;
      }
      if (j + 1 < cols) {
        a.at2(idx(i, j), idx(i, j + 1)) = 1.0;
        a.at2(idx(i, j + 1), idx(i, j)) = 1.0;
      }
    }
  }
  return a;
}

Tensor normalize_adjacency(const Tensor& a) {
  require(a.rank() == 2 && a.dim(0) == a.dim(1), "adjacency must be square");
  const std::size_t n = a.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    require(a.at2(i, i) == 0.0, "adjacency diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j) {
      require(a.at2(i, j) >= 0.0, "adjacency entries must be nonnegative");
      require(a.at2(i, j) == a.at2(j, i), "adjacency must be symmetric");
    }
  }
  std::vector<double> deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    deg[i] = 1.0;  // self loop
    for (std::size_t j = 0; j < n; ++j) deg[i] += a.at2(i, j);
  }
  Tensor hat({n, n});
  // One rounding per entry (x / sqrt(dd)) keeps unit degrees exact, and the
  // mirrored upper triangle keeps Ahat bitwise symmetric.
  for (std::size_t i = 0; i < n; ++i) {
    hat.at2(i, i) = 1.0 / std::sqrt(deg[i] * deg[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = a.at2(i, j) / std::sqrt(deg[i] * deg[j]);
      hat.at2(i, j) = v;
      hat.at2(j, i) = v;
    }
  }
  return hat;
}

ad::Var graph_mix(ad::Var h, std::shared_ptr<std::vector<Tensor>> hats, SeqMeta meta) {
  const Tensor& hv = h.value();
  require(hv.rank() == 2 && hv.dim(0) == meta.rows(), "graph_mix rows mismatch");
  require(hats && !hats->empty(), "graph_mix needs at least one adjacency");
  require(hats->size() == 1 || hats->size() == meta.batch,
          "graph_mix needs one adjacency or one per window");
  const std::size_t d = hv.dim(1), N = meta.N;
  for (const Tensor& m : *hats) {
    require(m.rank() == 2 && m.dim(0) == N && m.dim(1) == N,
            "normalized adjacency must be N x N");
  }

  Tensor out(hv.shape());
  for (std::size_t w = 0; w < meta.batch; ++w) {
    const Tensor& hat = (*hats)[hats->size() == 1 ? 0 : w];
    for (std::size_t t = 0; t < meta.T; ++t) {
      const std::size_t base = (w * meta.T + t) * N;
      kernels::matmul_accum(hat.data(), hv.data() + base * d, out.data() + base * d,
                            N, N, d);
    }
  }

  ad::Tape* t = h.tape();
  const int ih = h.index();
  int io = t->add_node(std::move(out), t->node(ih).needs_grad, nullptr);
  t->node(io).back = [ih, io, hats, meta, d](ad::Tape& tp) {
    Tensor* gh = tp.grad_if(ih);
    if (!gh) return;
    const Tensor& g = tp.node(io).grad;
    const std::size_t N = meta.N;
    for (std::size_t w = 0; w < meta.batch; ++w) {
      // Ahat is symmetric, so the adjoint multiply reuses it directly.
      const Tensor& hat = (*hats)[hats->size() == 1 ? 0 : w];
      for (std::size_t t2 = 0; t2 < meta.T; ++t2) {
        const std::size_t base = (w * meta.T + t2) * N;
        kernels::matmul_accum(hat.data(), g.data() + base * d, gh->data() + base * d,
                              N, N, d);
      }
    }
  };
  return ad::Var(t, io);
}

ad::Var gcn_layer(ad::Var h, ad::Var w, std::shared_ptr<std::vector<Tensor>> hats,
                  SeqMeta meta) {
  return ad::relu(ad::matmul(graph_mix(h, std::move(hats), meta), w));
}

EncoderOut st_encode(ad::Var x, const EncoderVars& v, const SplineGrid& grid,
                     std::shared_ptr<std::vector<Tensor>> hats, SeqMeta meta) {
  require(!v.layers.empty(), "encoder needs at least one layer");
  ad::Var h = ekan_layer(x, v.in_wb, v.in_ws, v.in_b, grid);
  EncoderOut out;
  bool first = true;
  for (const auto& layer : v.layers) {
    h = ekamba_block(h, layer.block_a, grid, meta);
    if (first) {
      out.C = h;
      first = false;
    }
    h = gcn_layer(h, layer.gcn_w, hats, meta);
    h = ekamba_block(h, layer.block_b, grid, meta);
  }
  out.Hseq = h;
  std::vector<std::size_t> last_rows(meta.batch * meta.N);
  for (std::size_t w = 0; w < meta.batch; ++w) {
    for (std::size_t n = 0; n < meta.N; ++n) {
      last_rows[w * meta.N + n] = (w * meta.T + (meta.T - 1)) * meta.N + n;
    }
  }
  out.M = ad::gather_rows(h, std::move(last_rows));
  return out;
}

}  // namespace riskcast
