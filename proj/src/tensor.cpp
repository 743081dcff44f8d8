#include "riskcast/tensor.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace riskcast {
namespace {

std::size_t g_current = 0;
std::size_t g_peak = 0;
bool g_checked = true;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

namespace detail {

void count_alloc(std::size_t bytes) {
  g_current += bytes;
  if (g_current > g_peak) g_peak = g_current;
}

void count_dealloc(std::size_t bytes) { g_current -= bytes; }

}  // namespace detail

std::size_t AllocStats::current_bytes() { return g_current; }
std::size_t AllocStats::peak_bytes() { return g_peak; }
void AllocStats::reset_peak() { g_peak = g_current; }

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  require(!shape_.empty(), "tensor rank must be at least 1");
  for (std::size_t d : shape_) require(d > 0, "tensor dims must be positive");
  data_.assign(shape_numel(shape_), 0.0);
}

Tensor Tensor::zeros(std::initializer_list<std::size_t> shape) {
  std::vector<std::size_t> s(shape);
  return Tensor(std::move(s));
}

Tensor Tensor::full(std::initializer_list<std::size_t> shape, double v) {
  std::vector<std::size_t> s(shape);
  Tensor t(std::move(s));
  t.fill(v);
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, const std::vector<double>& data) {
  Tensor t(std::move(shape));
  require(t.numel() == data.size(), "tensor data length does not match shape " + t.shape_str());
  if (g_checked) {
    for (double v : data) {
      if (!std::isfinite(v)) throw std::invalid_argument("tensor entries must be finite");
    }
  }
  for (std::size_t i = 0; i < data.size(); ++i) t.data_[i] = data[i];
  return t;
}

bool Tensor::checked() { return g_checked; }
void Tensor::set_checked(bool on) { g_checked = on; }

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::assert_finite(const std::string& context) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("non-finite value in " + context);
    }
  }
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Tensor transpose_copy(const Tensor& a) {
  require(a.rank() == 2, "transpose expects rank 2, got " + a.shape_str());
  Tensor t({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < a.dim(1); ++j) {
      t.at2(j, i) = a.at2(i, j);
    }
  }
  return t;
}

Param& ParamStore::add(const std::string& name, Tensor init) {
  for (const auto& it : items_) {
    require(it->name != name, "duplicate parameter name " + name);
  }
  auto p = std::make_unique<Param>();
  p->name = name;
  p->grad = Tensor(init.shape());
  p->value = std::move(init);
  items_.push_back(std::move(p));
  return *items_.back();
}

Param& ParamStore::get(const std::string& name) {
  for (auto& it : items_) {
    if (it->name == name) return *it;
  }
  throw std::invalid_argument("unknown parameter " + name);
}

const Param* ParamStore::find(const std::string& name) const {
  for (const auto& it : items_) {
    if (it->name == name) return it.get();
  }
  return nullptr;
}

void ParamStore::zero_grads() {
  for (auto& it : items_) it->grad.fill(0.0);
}

}  // namespace riskcast
