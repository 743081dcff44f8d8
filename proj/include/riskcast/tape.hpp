#pragma once
#include <functional>
#include <vector>

#include "riskcast/tensor.hpp"

// Reverse-mode autodiff over a flat tape of tensor nodes.
//
// A Tape lives for one forward+backward pass. Ops append nodes in execution
// order, so creation order is already a topological order and backward() is
// a reverse sweep. Leaf nodes copy their tensors in; gradients accumulate
// into node storage and are read back by the caller.
//
// Gradient buffers are allocated lazily inside backward() so forward-only
// passes pay no gradient memory.
namespace riskcast::ad {

class Tape;

struct Node {
  Tensor value;
  Tensor grad;
  bool needs_grad = false;
  std::function<void(Tape&)> back;
};

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int idx) : tape_(tape), idx_(idx) {}
  const Tensor& value() const;
  // Valid only after backward() on a tape that reached this node.
  const Tensor& grad() const;
  int index() const { return idx_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

class Tape {
 public:
  Var leaf(Tensor value, bool needs_grad = false);
  Var leaf_of(const Param& p);

  int add_node(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
  Node& node(int i) { return nodes_[i]; }
  const Node& node(int i) const { return nodes_[i]; }
  std::size_t size() const { return nodes_.size(); }

  // Null when the node does not participate in differentiation.
  Tensor* grad_if(int idx);

  // root must hold exactly one element. Runs once per tape.
  void backward(Var root);

 private:
  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// Generic ops. Shapes are validated; violations throw std::invalid_argument.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var bias);   // a: m x n, bias: n
Var mul_row(Var a, Var w);      // a: m x n, w: n
Var matmul(Var a, Var b);
Var transpose(Var a);
Var silu(Var a);
Var relu(Var a);
Var softplus(Var a);
Var sum(Var a);                 // shape {1}
Var sumsq(Var a);               // shape {1}
Var mean(Var a);                // shape {1}
Var row_sum(Var a);             // m x n -> {m}
Var slice_rows(Var a, std::size_t r0, std::size_t r1);
Var gather_rows(Var a, std::vector<std::size_t> rows);
Var reshape(Var a, std::vector<std::size_t> shape);
Var mul_const(Var a, Tensor c);
Var sub_const(Var a, Tensor c); // a - c
Var add_const(Var a, Tensor c); // a + c

// Numerically stable scalar helpers shared by ops and plain-tensor code.
double sigmoid(double x);
double silu_scalar(double x);
double softplus_scalar(double x);

// Binds params to tape leaves and accumulates leaf gradients back into the
// params after backward(). One LeafSet per tape.
class LeafSet {
 public:
  Var bind(Tape& t, Param& p);
  void harvest() const;

 private:
  std::vector<std::pair<Param*, Var>> items_;
};

// Max over all parameter elements of |analytic - central difference| /
// max(1, |central difference|). f(true) must run forward+backward and leave
// gradients in the store; f(false) must only return the loss value.
// Throws std::runtime_error when f returns a non-finite value.
double grad_check(const std::function<double(bool)>& f, ParamStore& params, double eps);

}  // namespace riskcast::ad
