#include "riskcast/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "riskcast/kernels.hpp"

namespace riskcast::ad {
namespace {

const Tensor& val(Var v) {
  require(v.valid(), "use of empty Var");
  return v.tape()->node(v.index()).value;
}

bool ng(Var v) { return v.tape()->node(v.index()).needs_grad; }

void check_same_tape(Var a, Var b) {
  require(a.tape() == b.tape(), "vars belong to different tapes");
}

}  // namespace

const Tensor& Var::value() const {
  require(tape_ != nullptr, "use of empty Var");
  return tape_->node(idx_).value;
}

const Tensor& Var::grad() const {
  require(tape_ != nullptr, "use of empty Var");
  const Node& n = tape_->node(idx_);
  require(n.grad.numel() > 0, "gradient not computed for this node");
  return n.grad;
}

Var Tape::leaf(Tensor value, bool needs_grad) {
  return Var(this, add_node(std::move(value), needs_grad, nullptr));
}

Var Tape::leaf_of(const Param& p) { return leaf(p.value, true); }

int Tape::add_node(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor* Tape::grad_if(int idx) {
  Node& n = nodes_[idx];
  if (!n.needs_grad) return nullptr;
  return &n.grad;
}

void Tape::backward(Var root) {
  require(root.valid() && root.tape() == this, "backward root must live on this tape");
  require(root.value().numel() == 1, "backward root must be scalar");
  require(!ran_backward_, "backward may run once per tape");
  ran_backward_ = true;

  const int last = root.index();
  for (int i = 0; i <= last; ++i) {
    if (nodes_[i].needs_grad) nodes_[i].grad = Tensor(nodes_[i].value.shape());
  }
  if (!nodes_[last].needs_grad) return;
  nodes_[last].grad.at(0) = 1.0;
  for (int i = last; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.back) n.back(*this);
  }
}

// ---- generic ops ----

Var add(Var a, Var b) {
  check_same_tape(a, b);
  require(val(a).same_shape(val(b)), "add shape mismatch " + val(a).shape_str() + " vs " + val(b).shape_str());
  Tensor out(val(a).shape());
  kernels::ops().add(val(a).data(), val(b).data(), out.data(), out.numel());
  Tape* t = a.tape();
  int ia = a.index(), ib = b.index();
  int io = t->add_node(std::move(out), ng(a) || ng(b), nullptr);
  t->node(io).back = [ia, ib, io](Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    if (Tensor* ga = tp.grad_if(ia)) kernels::ops().add(ga->data(), g.data(), ga->data(), g.numel());
    if (Tensor* gb = tp.grad_if(ib)) kernels::ops().add(gb->data(), g.data(), gb->data(), g.numel());
  };
  return Var(t, io);
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  require(val(a).same_shape(val(b)), "sub shape mismatch " + val(a).shape_str() + " vs " + val(b).shape_str());
  Tensor out(val(a).shape());
  kernels::ops().sub(val(a).data(), val(b).data(), out.data(), out.numel());
  Tape* t = a.tape();
  int ia = a.index(), ib = b.index();
  int io = t->add_node(std::move(out), ng(a) || ng(b), nullptr);
  t->node(io).back = [ia, ib, io](Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    if (Tensor* ga = tp.grad_if(ia)) kernels::ops().add(ga->data(), g.data(), ga->data(), g.numel());
    if (Tensor* gb = tp.grad_if(ib)) kernels::ops().axpy(-1.0, g.data(), gb->data(), g.numel());
  };
  return Var(t, io);
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  require(val(a).same_shape(val(b)), "mul shape mismatch " + val(a).shape_str() + " vs " + val(b).shape_str());
  Tensor out(val(a).shape());
  kernels::ops().mul(val(a).data(), val(b).data(), out.data(), out.numel());
  Tape* t = a.tape();
  int ia = a.index(), ib = b.index();
  int io = t->add_node(std::move(out), ng(a) || ng(b), nullptr);
  t->node(io).back = [ia, ib, io](Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    const Tensor& av = tp.node(ia).value;
    const Tensor& bv = tp.node(ib).value;
    Tensor tmp(g.shape());
    if (Tensor* ga = tp.grad_if(ia)) {
      kernels::ops().mul(g.data(), bv.data(), tmp.data(), g.numel());
      kernels::ops().add(ga->data(), tmp.data(), ga->data(), g.numel());
    }
    if (Tensor* gb = tp.grad_if(ib)) {
      kernels::ops().mul(g.data(), av.data(), tmp.data(), g.numel());
      kernels::ops().add(gb->data(), tmp.data(), gb->data(), g.numel());
    }
  };
  return Var(t, io);
}

Var scale(Var a, double s) {
  Tensor out(val(a).shape());
  kernels::ops().scale(val(a).data(), s, out.data(), out.numel());
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io, s](Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    if (Tensor* ga = tp.grad_if(ia)) kernels::ops().axpy(s, g.data(), ga->data(), g.numel());
  };
  return Var(t, io);
}

Var add_row(Var a, Var bias) {
  check_same_tape(a, bias);
  require(val(a).rank() == 2 && val(bias).rank() == 1 && val(a).dim(1) == val(bias).dim(0),
          "add_row expects (m x n) + (n)");
  const std::size_t m = val(a).dim(0), n = val(a).dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    kernels::ops().add(val(a).data() + i * n, val(bias).data(), out.data() + i * n, n);
  }
  Tape* t = a.tape();
  int ia = a.index(), ib = bias.index();
  int io = t->add_node(std::move(out), ng(a) || ng(bias), nullptr);
  t->node(io).back = [ia, ib, io, m, n](Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    if (Tensor* ga = tp.grad_if(ia)) kernels::ops().add(ga->data(), g.data(), ga->data(), g.numel());
    if (Tensor* gb = tp.grad_if(ib)) {
      for (std::size_t i = 0; i < m; ++i) {
        kernels::ops().add(gb->data(), g.data() + i * n, gb->data(), n);
      }
    }
  };
  return Var(t, io);
}

Var mul_row(Var a, Var w) {
  check_same_tape(a, w);
  require(val(a).rank() == 2 && val(w).rank() == 1 && val(a).dim(1) == val(w).dim(0),
          "mul_row expects (m x n) * (n)");
  const std::size_t m = val(a).dim(0), n = val(a).dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    kernels::ops().mul(val(a).data() + i * n, val(w).data(), out.data() + i * n, n);
  }
  Tape* t = a.tape();
  int ia = a.index(), iw = w.index();
  int io = t->add_node(std::move(out), ng(a) || ng(w), nullptr);
  t->node(io).back = [ia, iw, io, m, n](Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    const Tensor& av = tp.node(ia).value;
    const Tensor& wv = tp.node(iw).value;
    if (Tensor* ga = tp.grad_if(ia)) {
      for (std::size_t i = 0; i < m; ++i) {
        Tensor tmp({n});
        kernels::ops().mul(g.data() + i * n, wv.data(), tmp.data(), n);
        kernels::ops().add(ga->data() + i * n, tmp.data(), ga->data() + i * n, n);
      }
    }
    if (Tensor* gw = tp.grad_if(iw)) {
      Tensor tmp({n});
      for (std::size_t i = 0; i < m; ++i) {
        kernels::ops().mul(g.data() + i * n, av.data() + i * n, tmp.data(), n);
        kernels::ops().add(gw->data(), tmp.data(), gw->data(), n);
      }
    }
  };
  return Var(t, io);
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  require(val(a).rank() == 2 && val(b).rank() == 2 && val(a).dim(1) == val(b).dim(0),
          "matmul shape mismatch " + val(a).shape_str() + " x " + val(b).shape_str());
  const std::size_t m = val(a).dim(0), k = val(a).dim(1), n = val(b).dim(1);
  Tensor out({m, n});
  kernels::matmul_accum(val(a).data(), val(b).data(), out.data(), m, k, n);
  Tape* t = a.tape();
  int ia = a.index(), ib = b.index();
  int io = t->add_node(std::move(out), ng(a) || ng(b), nullptr);
  t->node(io).back = [ia, ib, io, m, k, n](Tape& tp) {
    const Tensor& g = tp.node(io).grad;
    if (Tensor* ga = tp.grad_if(ia)) {
      Tensor bt = transpose_copy(tp.node(ib).value);
      kernels::matmul_accum(g.data(), bt.data(), ga->data(), m, n, k);
    }
    if (Tensor* gb = tp.grad_if(ib)) {
      Tensor at = transpose_copy(tp.node(ia).value);
      kernels::matmul_accum(at.data(), g.data(), gb->data(), k, m, n);
    }
  };
  return Var(t, io);
}

Var transpose(Var a) {
  Tensor out = transpose_copy(val(a));
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      Tensor gt = transpose_copy(tp.node(io).grad);
      kernels::ops().add(ga->data(), gt.data(), ga->data(), gt.numel());
    }
  };
  return Var(t, io);
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double silu_scalar(double x) { return x * sigmoid(x); }

double softplus_scalar(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

Var silu(Var a) {
  Tensor out(val(a).shape());
  const Tensor& av = val(a);
  for (std::size_t i = 0; i < av.numel(); ++i) out.at(i) = silu_scalar(av.at(i));
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      const Tensor& x = tp.node(ia).value;
      for (std::size_t i = 0; i < x.numel(); ++i) {
        double s = sigmoid(x.at(i));
        ga->at(i) += g.at(i) * (s + x.at(i) * s * (1.0 - s));
      }
    }
  };
  return Var(t, io);
}

Var relu(Var a) {
  Tensor out(val(a).shape());
  const Tensor& av = val(a);
  for (std::size_t i = 0; i < av.numel(); ++i) out.at(i) = av.at(i) > 0.0 ? av.at(i) : 0.0;
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      const Tensor& x = tp.node(ia).value;
      for (std::size_t i = 0; i < x.numel(); ++i) {
        if (x.at(i) > 0.0) ga->at(i) += g.at(i);
      }
    }
  };
  return Var(t, io);
}

Var softplus(Var a) {
  Tensor out(val(a).shape());
  const Tensor& av = val(a);
  for (std::size_t i = 0; i < av.numel(); ++i) out.at(i) = softplus_scalar(av.at(i));
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      const Tensor& x = tp.node(ia).value;
      for (std::size_t i = 0; i < x.numel(); ++i) {
        ga->at(i) += g.at(i) * sigmoid(x.at(i));
      }
    }
  };
  return Var(t, io);
}

Var sum(Var a) {
  double acc = 0.0;
  const Tensor& av = val(a);
  for (std::size_t i = 0; i < av.numel(); ++i) acc += av.at(i);
  Tensor out({1});
  out.at(0) = acc;
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      double g0 = tp.node(io).grad.at(0);
      for (std::size_t i = 0; i < ga->numel(); ++i) ga->at(i) += g0;
    }
  };
  return Var(t, io);
}

Var sumsq(Var a) {
  double acc = 0.0;
  const Tensor& av = val(a);
  for (std::size_t i = 0; i < av.numel(); ++i) acc += av.at(i) * av.at(i);
  Tensor out({1});
  out.at(0) = acc;
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      double g0 = tp.node(io).grad.at(0);
      const Tensor& x = tp.node(ia).value;
      kernels::ops().axpy(2.0 * g0, x.data(), ga->data(), x.numel());
    }
  };
  return Var(t, io);
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(val(a).numel())); }

Var row_sum(Var a) {
  require(val(a).rank() == 2, "row_sum expects rank 2");
  const std::size_t m = val(a).dim(0), n = val(a).dim(1);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += val(a).at2(i, j);
    out.at(i) = acc;
  }
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io, m, n](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) ga->at(i * n + j) += g.at(i);
      }
    }
  };
  return Var(t, io);
}

Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
  require(val(a).rank() == 2, "slice_rows expects rank 2");
  require(r0 < r1 && r1 <= val(a).dim(0), "slice_rows range out of bounds");
  const std::size_t n = val(a).dim(1);
  Tensor out({r1 - r0, n});
  for (std::size_t i = 0; i < r1 - r0; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at2(i, j) = val(a).at2(r0 + i, j);
  }
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io, r0, n](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      for (std::size_t i = 0; i < g.dim(0); ++i) {
        kernels::ops().add(ga->data() + (r0 + i) * n, g.data() + i * n, ga->data() + (r0 + i) * n, n);
      }
    }
  };
  return Var(t, io);
}

Var gather_rows(Var a, std::vector<std::size_t> rows) {
  require(val(a).rank() == 2, "gather_rows expects rank 2");
  const std::size_t n = val(a).dim(1);
  for (std::size_t r : rows) require(r < val(a).dim(0), "gather_rows index out of bounds");
  Tensor out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at2(i, j) = val(a).at2(rows[i], j);
  }
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io, rows = std::move(rows), n](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        kernels::ops().add(ga->data() + rows[i] * n, g.data() + i * n, ga->data() + rows[i] * n, n);
      }
    }
  };
  return Var(t, io);
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tensor out(shape);
  require(out.numel() == val(a).numel(), "reshape must preserve element count");
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = val(a).at(i);
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      kernels::ops().add(ga->data(), g.data(), ga->data(), g.numel());
    }
  };
  return Var(t, io);
}

Var mul_const(Var a, Tensor c) {
  require(val(a).same_shape(c), "mul_const shape mismatch");
  Tensor out(val(a).shape());
  kernels::ops().mul(val(a).data(), c.data(), out.data(), out.numel());
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io, c = std::move(c)](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      Tensor tmp(g.shape());
      kernels::ops().mul(g.data(), c.data(), tmp.data(), g.numel());
      kernels::ops().add(ga->data(), tmp.data(), ga->data(), g.numel());
    }
  };
  return Var(t, io);
}

Var sub_const(Var a, Tensor c) {
  require(val(a).same_shape(c), "sub_const shape mismatch");
  Tensor out(val(a).shape());
  kernels::ops().sub(val(a).data(), c.data(), out.data(), out.numel());
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      kernels::ops().add(ga->data(), g.data(), ga->data(), g.numel());
    }
  };
  return Var(t, io);
}

Var add_const(Var a, Tensor c) {
  require(val(a).same_shape(c), "add_const shape mismatch");
  Tensor out(val(a).shape());
  kernels::ops().add(val(a).data(), c.data(), out.data(), out.numel());
  Tape* t = a.tape();
  int ia = a.index();
  int io = t->add_node(std::move(out), ng(a), nullptr);
  t->node(io).back = [ia, io](Tape& tp) {
    if (Tensor* ga = tp.grad_if(ia)) {
      const Tensor& g = tp.node(io).grad;
      kernels::ops().add(ga->data(), g.data(), ga->data(), g.numel());
    }
  };
  return Var(t, io);
}

Var LeafSet::bind(Tape& t, Param& p) {
  Var v = t.leaf_of(p);
  items_.emplace_back(&p, v);
  return v;
}

void LeafSet::harvest() const {
  for (const auto& [p, v] : items_) {
    const Node& n = v.tape()->node(v.index());
    if (n.grad.numel() == 0) continue;
    kernels::ops().add(p->grad.data(), n.grad.data(), p->grad.data(), n.grad.numel());
  }
}

double grad_check(const std::function<double(bool)>& f, ParamStore& params, double eps) {
  require(eps >= 1e-7 && eps <= 1e-3, "grad_check eps must lie in [1e-7, 1e-3]");
  params.zero_grads();
  double base = f(true);
  if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite loss");

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    analytic.push_back(params.at(p).grad);
  }

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& v = params.at(p).value;
    for (std::size_t i = 0; i < v.numel(); ++i) {
      const double orig = v.at(i);
      v.at(i) = orig + eps;
      double lp = f(false);
      v.at(i) = orig - eps;
      double lm = f(false);
      v.at(i) = orig;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        throw std::runtime_error("grad_check: non-finite loss at perturbed " + params.at(p).name);
      }
      double fd = (lp - lm) / (2.0 * eps);
      double rel = std::abs(analytic[p].at(i) - fd) / std::max(1.0, std::abs(fd));
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace riskcast::ad
