#include "distillgan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "distillgan/ops.hpp"
#include "distillgan/random.hpp"

namespace distillgan {
namespace {

template <typename T>
double project(const Tensor<T>& y, const std::vector<double>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) acc += w[i] * static_cast<double>(y.data[i]);
  return acc;
}

}  // namespace

template <typename T>
GradCheckReport grad_check(const Fragment<T>& fragment, const std::vector<TensorPtr<T>>& wrt,
                           T eps, double tolerance, std::uint64_t seed, double floor) {
  std::size_t total = 0;
  for (const auto& t : wrt) total += t->numel();
  if (total >= 10000) {
    throw ContractError("grad_check: " + std::to_string(total) +
                        " elements exceeds the 10^4 desk-scale limit");
  }

  for (const auto& t : wrt) {
    t->requires_grad = true;
    t->ensure_grad();
    t->zero_grad();
  }

  Tape<T> tape;
  const TensorPtr<T> y = fragment(&tape);
  RandomStream rng(seed, 0x47524144ull);
  std::vector<double> w(y->numel());
  for (double& v : w) v = rng.normal();
  std::vector<T> wt(w.begin(), w.end());
  auto weights = make_tensor<T>(y->shape, std::move(wt));
  const auto loss = ops::sum(&tape, ops::mul(&tape, y, weights));
  tape.backward(loss);

  GradCheckReport report;
  report.tolerance = tolerance;
  double total_diff_sq = 0.0, total_analytic_sq = 0.0, total_numeric_sq = 0.0, worst_input = -1.0;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    Tensor<T>& t = *wrt[ti];
    const std::vector<T> analytic = t.grad;
    double diff_sq = 0.0, analytic_sq = 0.0, numeric_sq = 0.0, worst_abs = -1.0;
    std::string worst_element;
    for (std::size_t j = 0; j < t.numel(); ++j) {
      const T saved = t.data[j];
      // Central differences at h and 2h, combined by Richardson extrapolation
      // so the truncation error is O(h^4) and h can be large enough to keep
      // T-precision rounding of the forward pass out of the estimate.
      auto central = [&](T h) {
        t.data[j] = saved + h;
        const double plus = project(*fragment(nullptr), w);
        t.data[j] = saved - h;
        const double minus = project(*fragment(nullptr), w);
        t.data[j] = saved;
        // Step actually taken in T, which can differ from 2h by rounding.
        return (plus - minus) / (static_cast<double>(saved + h) - static_cast<double>(saved - h));
      };
      const double numeric = (4.0 * central(eps) - central(eps + eps)) / 3.0;
      const double a = analytic[j];
      diff_sq += (a - numeric) * (a - numeric);
      analytic_sq += a * a;
      numeric_sq += numeric * numeric;
      if (std::abs(a - numeric) > worst_abs) {
        worst_abs = std::abs(a - numeric);
        std::ostringstream os;
        os << "element " << j << ": tape " << a << " vs numeric " << numeric;
        worst_element = os.str();
      }
      ++report.elements;
    }
    total_diff_sq += diff_sq;
    total_analytic_sq += analytic_sq;
    total_numeric_sq += numeric_sq;
    if (diff_sq > worst_input) {
      worst_input = diff_sq;
      std::ostringstream os;
      os << "input " << ti << " " << shape_str(t.shape) << ", |error| " << std::sqrt(diff_sq)
         << ", worst " << worst_element;
      report.worst = os.str();
    }
    t.zero_grad();
  }
  report.max_rel_error = std::sqrt(total_diff_sq) /
                         std::max({std::sqrt(total_analytic_sq), std::sqrt(total_numeric_sq), floor});
  report.passed = report.max_rel_error < tolerance;
  return report;
}

template GradCheckReport grad_check<float>(const Fragment<float>&,
                                           const std::vector<TensorPtr<float>>&, float, double,
                                           std::uint64_t, double);
template GradCheckReport grad_check<double>(const Fragment<double>&,
                                            const std::vector<TensorPtr<double>>&, double, double,
                                            std::uint64_t, double);

}  // namespace distillgan
