#include "distillgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace distillgan {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values, bool needs_grad)
    : shape(std::move(s)), data(std::move(values)), requires_grad(needs_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
}

template <typename T>
void Tensor<T>::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), T(0));
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
}

template struct Tensor<float>;
template struct Tensor<double>;

}  // namespace distillgan
