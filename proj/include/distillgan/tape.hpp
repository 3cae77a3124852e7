#pragma once

#include <functional>
#include <vector>

#include "distillgan/tensor.hpp"

namespace distillgan {

// Records backward rules in execution order. Ops append to the tape only when
// at least one input requires a gradient, so entries are topologically sorted
// by construction. A tape belongs to one training run and is not thread-safe.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(BackwardFn fn) { nodes_.push_back(std::move(fn)); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded rules in reverse.
  // Gradients accumulate into every tensor that requires one; the tape is
  // cleared afterwards, releasing intermediates.
  void backward(const TensorPtr<T>& loss);

 private:
  std::vector<BackwardFn> nodes_;
};

template <typename T>
void backward(Tape<T>& tape, const TensorPtr<T>& loss) {
  tape.backward(loss);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace distillgan
