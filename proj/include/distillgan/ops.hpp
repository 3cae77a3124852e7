#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "distillgan/tape.hpp"
#include "distillgan/tensor.hpp"

// Differentiable operations. Each op computes its output eagerly and, when a
// tape is supplied and some input requires a gradient, records the rule that
// propagates the output gradient back into its inputs. Passing a null tape
// evaluates without recording (safe to call concurrently on distinct tensors).
namespace distillgan::ops {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// H' = floor((H + 2p - K) / s) + 1; throws ShapeError when the padded input is
// smaller than the kernel.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, ConvGeometry g);
// H' = (H - 1) s - 2p + K
std::size_t conv_transpose_out_size(std::size_t in, std::size_t kernel, ConvGeometry g);

enum class NormMode {
  train,  // batch statistics, running averages updated
  batch,  // batch statistics, running averages untouched (frozen networks)
  eval,   // running averages
};

template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.9);  // weight on the previous running value
  T eps = T(1e-5);

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// x [N, in], weight [out, in], bias [out] or null -> [N, out]
template <typename T>
TensorPtr<T> dense(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& weight,
                   const TensorPtr<T>& bias);

// x [N, C, H, W], weight [Co, C, K, K], bias [Co] or null -> [N, Co, H', W']
template <typename T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& weight,
                    const TensorPtr<T>& bias, ConvGeometry geometry);

// x [N, C, H, W], weight [C, Co, K, K], bias [Co] or null -> [N, Co, H', W'].
// Adjoint of conv2d with the same geometry.
template <typename T>
TensorPtr<T> conv_transpose2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& weight,
                              const TensorPtr<T>& bias, ConvGeometry geometry);

// Per-channel normalization of x [N, C, H, W] with affine gamma/beta [C].
template <typename T>
TensorPtr<T> batchnorm2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& gamma,
                         const TensorPtr<T>& beta, BatchNormStats<T>& stats, NormMode mode);

template <typename T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& x);
template <typename T>
TensorPtr<T> leaky_relu(Tape<T>* tape, const TensorPtr<T>& x, T slope = T(0.2));
template <typename T>
TensorPtr<T> tanh(Tape<T>* tape, const TensorPtr<T>& x);
template <typename T>
TensorPtr<T> sigmoid(Tape<T>* tape, const TensorPtr<T>& x);
// Softmax over the last axis of a rank-2 tensor.
template <typename T>
TensorPtr<T> softmax(Tape<T>* tape, const TensorPtr<T>& x);

template <typename T>
TensorPtr<T> reshape(Tape<T>* tape, const TensorPtr<T>& x, Shape shape);

// [N, C, H, W] -> [N, C], mean over the spatial axes.
template <typename T>
TensorPtr<T> spatial_mean(Tape<T>* tape, const TensorPtr<T>& x);

template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T>
TensorPtr<T> sub(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T>
TensorPtr<T> mul(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T>
TensorPtr<T> scale(Tape<T>* tape, const TensorPtr<T>& x, T factor);
template <typename T>
TensorPtr<T> square(Tape<T>* tape, const TensorPtr<T>& x);

// Reductions to shape [1].
template <typename T>
TensorPtr<T> sum(Tape<T>* tape, const TensorPtr<T>& x);
template <typename T>
TensorPtr<T> mean(Tape<T>* tape, const TensorPtr<T>& x);

// mean((a - b)^2) over all elements.
template <typename T>
TensorPtr<T> mse_loss(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

// mean(-[t log p + (1 - t) log(1 - p)]); p is clamped to [1e-7, 1 - 1e-7] inside the logs.
template <typename T>
TensorPtr<T> bce_loss(Tape<T>* tape, const TensorPtr<T>& probs, const TensorPtr<T>& targets);

// bce_loss(sigmoid(logits), target) evaluated stably from logits, constant target.
template <typename T>
TensorPtr<T> bce_with_logits(Tape<T>* tape, const TensorPtr<T>& logits, T target);

// mean over rows of -log softmax(logits)[label].
template <typename T>
TensorPtr<T> cross_entropy(Tape<T>* tape, const TensorPtr<T>& logits, std::span<const int> labels);

}  // namespace distillgan::ops
