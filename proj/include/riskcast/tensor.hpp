#pragma once
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

// Dense row-major float64 tensors plus allocation accounting.
// All tensor storage goes through CountingAllocator so benchmarks can read
// live and peak byte counts. Counters are process-wide and not thread safe.
namespace riskcast {

struct AllocStats {
  static std::size_t current_bytes();
  static std::size_t peak_bytes();
  // Sets peak back down to the current live count.
  static void reset_peak();
};

namespace detail {
void count_alloc(std::size_t bytes);
void count_dealloc(std::size_t bytes);
}  // namespace detail

template <class T>
struct CountingAllocator {
  using value_type = T;
  CountingAllocator() = default;
  template <class U>
  CountingAllocator(const CountingAllocator<U>&) {}
  T* allocate(std::size_t n) {
    detail::count_alloc(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) {
    detail::count_dealloc(n * sizeof(T));
    ::operator delete(p);
  }
  template <class U>
  bool operator==(const CountingAllocator<U>&) const { return true; }
};

class Tensor {
 public:
  using Storage = std::vector<double, CountingAllocator<double>>;

  Tensor() = default;
  // Zero-filled.
  explicit Tensor(std::vector<std::size_t> shape);

  static Tensor zeros(std::initializer_list<std::size_t> shape);
  static Tensor full(std::initializer_list<std::size_t> shape, double v);
  // Validates size and, in checked mode, rejects non-finite entries.
  static Tensor from(std::vector<std::size_t> shape, const std::vector<double>& data);

  // Checked mode gates finiteness validation in from(). Default on.
  static bool checked();
  static void set_checked(bool on);

  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(double v);
  // Throws std::runtime_error naming the context when an entry is not finite.
  void assert_finite(const std::string& context) const;

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  Storage data_;
};

// Convenience checks used across modules. Throw std::invalid_argument.
void require(bool cond, const std::string& msg);

// Returns a transposed copy of a rank-2 tensor.
Tensor transpose_copy(const Tensor& a);

// A named trainable value with an accumulated gradient of equal shape.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Insertion-ordered registry. Addresses are stable after add().
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor init);
  Param& at(std::size_t i) { return *items_[i]; }
  const Param& at(std::size_t i) const { return *items_[i]; }
  Param& get(const std::string& name);
  const Param* find(const std::string& name) const;
  std::size_t size() const { return items_.size(); }
  void zero_grads();

 private:
  std::vector<std::unique_ptr<Param>> items_;
};

}  // namespace riskcast
