#ifndef SRNET_TENSOR_HPP
#define SRNET_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace srnet {

inline std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape);

// Dense n-dimensional array of doubles in row-major order.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), values_(shape_product(shape_), 0.0) {
    check_shape();
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (shape_product(shape_) != values_.size())
      throw std::invalid_argument("tensor shape " + shape_str(shape_) +
                                  " does not match value count " + std::to_string(values_.size()));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  template <typename... Ix>
  double& operator()(Ix... ix) {
    return values_[offset({static_cast<std::size_t>(ix)...})];
  }
  template <typename... Ix>
  double operator()(Ix... ix) const {
    return values_[offset({static_cast<std::size_t>(ix)...})];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double item() const {
    if (values_.size() != 1)
      throw std::logic_error("item() on non-scalar tensor of shape " + shape_str(shape_));
    return values_[0];
  }

  void fill(double v) { values_.assign(values_.size(), v); }

 private:
  void check_shape() const {
    for (std::size_t d : shape_)
      if (d == 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_str(shape_));
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size())
      throw std::logic_error("index rank " + std::to_string(idx.size()) +
                             " does not match tensor rank " + std::to_string(shape_.size()));
    std::size_t off = 0;
    std::size_t k = 0;
    for (std::size_t i : idx) {
      off = off * shape_[k] + i;
      ++k;
    }
    return off;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// Trainable leaf: a value tensor plus an additively accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

}  // namespace srnet

#endif
