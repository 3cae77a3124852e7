#include "distillgan/tape.hpp"

namespace distillgan {

template <typename T>
void Tape<T>::backward(const TensorPtr<T>& loss) {
  if (!loss) throw ContractError("backward: null loss tensor");
  if (loss->shape != Shape{1}) {
    throw ContractError("backward: loss must be a scalar of shape [1], got " +
                        shape_str(loss->shape));
  }
  if (!loss->requires_grad) {
    throw ContractError("backward: loss does not depend on any tensor that requires a gradient");
  }
  loss->ensure_grad();
  loss->grad[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  nodes_.clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace distillgan
