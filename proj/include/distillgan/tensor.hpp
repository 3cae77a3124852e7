#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "distillgan/error.hpp"

namespace distillgan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array with an optional gradient buffer of the same length.
// Instantiated for float (training) and double (gradient verification).
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when absent
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> values, bool needs_grad = false);

  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t rank() const { return shape.size(); }
  bool has_grad() const { return !grad.empty(); }

  // Allocates a zero-filled gradient buffer if none exists.
  void ensure_grad();
  void zero_grad();
  void drop_grad() { grad.clear(); }

  bool all_finite() const;
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> values, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
TensorPtr<T> zeros(Shape shape, bool requires_grad = false) {
  const std::size_t n = shape_numel(shape);
  return make_tensor<T>(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
TensorPtr<T> full(Shape shape, T value, bool requires_grad = false) {
  const std::size_t n = shape_numel(shape);
  return make_tensor<T>(std::move(shape), std::vector<T>(n, value), requires_grad);
}

// Deep copy; the copy carries no gradient and does not require one.
template <typename T>
TensorPtr<T> detach(const Tensor<T>& t) {
  return make_tensor<T>(t.shape, t.data, false);
}

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace distillgan
