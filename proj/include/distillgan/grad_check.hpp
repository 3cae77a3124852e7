#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "distillgan/tape.hpp"
#include "distillgan/tensor.hpp"

namespace distillgan {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t elements = 0;
  bool passed = false;
  std::string worst;  // input with the largest error
};

// Builds the fragment's output from tensors it has captured. Called once with a
// tape and repeatedly with nullptr while single elements are perturbed.
template <typename T>
using Fragment = std::function<TensorPtr<T>(Tape<T>*)>;

// Compares tape gradients with finite differences of a fixed random
// projection sum_i w_i y_i of the fragment output, w ~ N(0, 1) drawn from
// `seed`. The projection of perturbed outputs is accumulated in double and the
// derivative is the Richardson combination of central differences at eps and
// 2 eps (truncation error O(eps^4)).
//
// The relative error is norm-wise over the concatenated gradient of all
// inputs, ||a - n||_2 / max(||a||_2, ||n||_2, floor), between tape (a) and
// numeric (n) gradients. Element-wise ratios are not used because 32-bit
// rounding noise in the perturbed forward passes dominates elements whose
// derivative is near zero. `worst` names the input with the largest absolute
// error. `wrt` must hold fewer than 10^4 elements in total.
template <typename T>
GradCheckReport grad_check(const Fragment<T>& fragment, const std::vector<TensorPtr<T>>& wrt,
                           T eps, double tolerance, std::uint64_t seed = 0, double floor = 1e-2);

extern template GradCheckReport grad_check<float>(const Fragment<float>&,
                                                  const std::vector<TensorPtr<float>>&, float,
                                                  double, std::uint64_t, double);
extern template GradCheckReport grad_check<double>(const Fragment<double>&,
                                                   const std::vector<TensorPtr<double>>&, double,
                                                   double, std::uint64_t, double);

}  // namespace distillgan
