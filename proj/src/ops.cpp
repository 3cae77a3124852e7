#include "distillgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

#include "gemm.hpp"

namespace distillgan::ops {
namespace {

template <typename T>
void require(const TensorPtr<T>& t, const char* op, const char* what) {
  if (!t) throw ContractError(std::string(op) + ": " + what + " is null");
}

template <typename T>
void require_finite(const TensorPtr<T>& t, const char* op) {
  require(t, op, "input");
  if (!t->all_finite()) throw NumericError(std::string(op) + ": non-finite value in input");
}

template <typename T>
void require_rank(const TensorPtr<T>& t, std::size_t rank, const char* op, const char* what) {
  if (t->rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t->shape));
  }
}

template <typename T>
void require_same_shape(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* op) {
  if (a->shape != b->shape) {
    throw ShapeError(std::string(op) + ": operand shapes differ, " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  }
}

template <typename T>
bool tracking(Tape<T>* tape, std::initializer_list<const TensorPtr<T>*> inputs) {
  if (!tape) return false;
  for (const auto* in : inputs) {
    if (*in && (*in)->requires_grad) return true;
  }
  return false;
}

template <typename T>
bool wants_grad(const TensorPtr<T>& t) {
  return t && t->requires_grad;
}

template <typename T>
TensorPtr<T> output(Shape shape, std::vector<T> values, bool track) {
  return make_tensor<T>(std::move(shape), std::move(values), track);
}

// Gathers K x K patches of x [N, C, H, W] into col [C*K*K, N*Ho*Wo].
template <typename T>
void im2col(const T* x, std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            ConvGeometry g, std::size_t ho, std::size_t wo, T* col) {
  const std::size_t plane = ho * wo;
  const std::size_t cols = n * plane;
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = col + ((ci * k + ki) * k + kj) * cols;
        for (std::size_t s = 0; s < n; ++s) {
          const T* src = x + (s * c + ci) * h * w;
          T* out = dst + s * plane;
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * stride +
                                      static_cast<std::ptrdiff_t>(ki) - pad;
            T* orow = out + oh * wo;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
              std::fill(orow, orow + wo, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(ih) * w;
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * stride +
                                        static_cast<std::ptrdiff_t>(kj) - pad;
              orow[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w))
                             ? T(0)
                             : srow[static_cast<std::size_t>(iw)];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters col back onto x, accumulating.
template <typename T>
void col2im(const T* col, std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            ConvGeometry g, std::size_t ho, std::size_t wo, T* x) {
  const std::size_t plane = ho * wo;
  const std::size_t cols = n * plane;
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = col + ((ci * k + ki) * k + kj) * cols;
        for (std::size_t s = 0; s < n; ++s) {
          T* dst = x + (s * c + ci) * h * w;
          const T* in = src + s * plane;
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * stride +
                                      static_cast<std::ptrdiff_t>(ki) - pad;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            T* drow = dst + static_cast<std::size_t>(ih) * w;
            const T* irow = in + oh * wo;
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * stride +
                                        static_cast<std::ptrdiff_t>(kj) - pad;
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(w)) {
                drow[static_cast<std::size_t>(iw)] += irow[ow];
              }
            }
          }
        }
      }
    }
  }
}

// [N, C, P] <-> [C, N*P]
template <typename T>
void channels_first(const T* src, std::size_t n, std::size_t c, std::size_t p, T* dst) {
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      std::copy_n(src + (s * c + ci) * p, p, dst + ci * n * p + s * p);
    }
  }
}

template <typename T>
void batch_first(const T* src, std::size_t n, std::size_t c, std::size_t p, T* dst) {
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      std::copy_n(src + ci * n * p + s * p, p, dst + (s * c + ci) * p);
    }
  }
}

template <typename T>
void add_channel_bias(const Tensor<T>& bias, std::size_t n, std::size_t c, std::size_t p,
                      std::vector<T>& y) {
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      T* row = y.data() + (s * c + ci) * p;
      const T b = bias.data[ci];
      for (std::size_t i = 0; i < p; ++i) row[i] += b;
    }
  }
}

template <typename T>
void accumulate_channel_bias_grad(const std::vector<T>& dy, std::size_t n, std::size_t c,
                                  std::size_t p, Tensor<T>& bias) {
  bias.ensure_grad();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const T* row = dy.data() + (s * c + ci) * p;
      T acc = T(0);
      for (std::size_t i = 0; i < p; ++i) acc += row[i];
      bias.grad[ci] += acc;
    }
  }
}

template <typename T, typename Fwd, typename Bwd>
TensorPtr<T> unary(Tape<T>* tape, const TensorPtr<T>& x, const char* name, Fwd fwd, Bwd bwd) {
  require_finite(x, name);
  std::vector<T> y(x->numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(x->data[i]);
  const bool track = tracking(tape, {&x});
  auto out = output(x->shape, std::move(y), track);
  if (track) {
    tape->record([x, out, bwd]() {
      if (!out->has_grad()) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < x->numel(); ++i) {
        x->grad[i] += out->grad[i] * bwd(x->data[i], out->data[i]);
      }
    });
  }
  return out;
}

}  // namespace

std::size_t conv_out_size(std::size_t in, std::size_t kernel, ConvGeometry g) {
  if (g.stride == 0) throw ShapeError("conv: stride must be positive");
  if (kernel == 0) throw ShapeError("conv: kernel size must be positive");
  if (in + 2 * g.pad < kernel) {
    throw ShapeError("conv: padded input " + std::to_string(in + 2 * g.pad) +
                     " is smaller than kernel " + std::to_string(kernel));
  }
  return (in + 2 * g.pad - kernel) / g.stride + 1;
}

std::size_t conv_transpose_out_size(std::size_t in, std::size_t kernel, ConvGeometry g) {
  if (g.stride == 0) throw ShapeError("conv_transpose: stride must be positive");
  if (kernel == 0) throw ShapeError("conv_transpose: kernel size must be positive");
  const std::size_t grown = (in - 1) * g.stride + kernel;
  if (grown <= 2 * g.pad) {
    throw ShapeError("conv_transpose: padding " + std::to_string(g.pad) +
                     " removes the whole output");
  }
  return grown - 2 * g.pad;
}

template <typename T>
TensorPtr<T> dense(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& weight,
                   const TensorPtr<T>& bias) {
  require_finite(x, "dense");
  require(weight, "dense", "weight");
  require_rank(x, 2, "dense", "input");
  require_rank(weight, 2, "dense", "weight");
  const std::size_t n = x->dim(0), in = x->dim(1), out_dim = weight->dim(0);
  if (weight->dim(1) != in) {
    throw ShapeError("dense: input has " + std::to_string(in) + " features but weight is " +
                     shape_str(weight->shape));
  }
  if (bias && bias->shape != Shape{out_dim}) {
    throw ShapeError("dense: bias must be [" + std::to_string(out_dim) + "], got " +
                     shape_str(bias->shape));
  }
  std::vector<T> y(n * out_dim, T(0));
  detail::gemm_nt(n, out_dim, in, x->data.data(), weight->data.data(), y.data());
  if (bias) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t o = 0; o < out_dim; ++o) y[s * out_dim + o] += bias->data[o];
    }
  }
  const bool track = tracking(tape, {&x, &weight, &bias});
  auto out = output(Shape{n, out_dim}, std::move(y), track);
  if (track) {
    tape->record([x, weight, bias, out, n, in, out_dim]() {
      if (!out->has_grad()) return;
      const T* dy = out->grad.data();
      if (x->requires_grad) {
        x->ensure_grad();
        detail::gemm_nn(n, in, out_dim, dy, weight->data.data(), x->grad.data());
      }
      if (weight->requires_grad) {
        weight->ensure_grad();
        detail::gemm_tn(out_dim, in, n, dy, x->data.data(), weight->grad.data());
      }
      if (wants_grad(bias)) {
        bias->ensure_grad();
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t o = 0; o < out_dim; ++o) bias->grad[o] += dy[s * out_dim + o];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& weight,
                    const TensorPtr<T>& bias, ConvGeometry g) {
  require_finite(x, "conv2d");
  require(weight, "conv2d", "weight");
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  const std::size_t n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const std::size_t co = weight->dim(0), k = weight->dim(2);
  if (weight->dim(1) != c || weight->dim(3) != k) {
    throw ShapeError("conv2d: weight " + shape_str(weight->shape) + " incompatible with input " +
                     shape_str(x->shape));
  }
  if (bias && bias->shape != Shape{co}) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(co) + "], got " +
                     shape_str(bias->shape));
  }
  const std::size_t ho = conv_out_size(h, k, g), wo = conv_out_size(w, k, g);
  const std::size_t plane = ho * wo, ckk = c * k * k;

  auto col = std::make_shared<std::vector<T>>(ckk * n * plane);
  im2col(x->data.data(), n, c, h, w, k, g, ho, wo, col->data());
  std::vector<T> ycf(co * n * plane, T(0));
  detail::gemm_nn(co, n * plane, ckk, weight->data.data(), col->data(), ycf.data());
  std::vector<T> y(ycf.size());
  batch_first(ycf.data(), n, co, plane, y.data());
  if (bias) add_channel_bias(*bias, n, co, plane, y);

  const bool track = tracking(tape, {&x, &weight, &bias});
  auto out = output(Shape{n, co, ho, wo}, std::move(y), track);
  if (track) {
    tape->record([x, weight, bias, out, col, g, n, c, h, w, co, k, ho, wo, plane, ckk]() {
      if (!out->has_grad()) return;
      std::vector<T> dycf(co * n * plane);
      channels_first(out->grad.data(), n, co, plane, dycf.data());
      if (weight->requires_grad) {
        weight->ensure_grad();
        detail::gemm_nt(co, ckk, n * plane, dycf.data(), col->data(), weight->grad.data());
      }
      if (x->requires_grad) {
        std::vector<T> dcol(ckk * n * plane, T(0));
        detail::gemm_tn(ckk, n * plane, co, weight->data.data(), dycf.data(), dcol.data());
        x->ensure_grad();
        col2im(dcol.data(), n, c, h, w, k, g, ho, wo, x->grad.data());
      }
      if (wants_grad(bias)) accumulate_channel_bias_grad(out->grad, n, co, plane, *bias);
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> conv_transpose2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& weight,
                              const TensorPtr<T>& bias, ConvGeometry g) {
  require_finite(x, "conv_transpose2d");
  require(weight, "conv_transpose2d", "weight");
  require_rank(x, 4, "conv_transpose2d", "input");
  require_rank(weight, 4, "conv_transpose2d", "weight");
  const std::size_t n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const std::size_t co = weight->dim(1), k = weight->dim(2);
  if (weight->dim(0) != c || weight->dim(3) != k) {
    throw ShapeError("conv_transpose2d: weight " + shape_str(weight->shape) +
                     " incompatible with input " + shape_str(x->shape));
  }
  if (bias && bias->shape != Shape{co}) {
    throw ShapeError("conv_transpose2d: bias must be [" + std::to_string(co) + "], got " +
                     shape_str(bias->shape));
  }
  const std::size_t ho = conv_transpose_out_size(h, k, g), wo = conv_transpose_out_size(w, k, g);
  const std::size_t plane = h * w, cokk = co * k * k;

  auto xcf = std::make_shared<std::vector<T>>(c * n * plane);
  channels_first(x->data.data(), n, c, plane, xcf->data());
  std::vector<T> col(cokk * n * plane, T(0));
  detail::gemm_tn(cokk, n * plane, c, weight->data.data(), xcf->data(), col.data());
  std::vector<T> y(n * co * ho * wo, T(0));
  col2im(col.data(), n, co, ho, wo, k, g, h, w, y.data());
  if (bias) add_channel_bias(*bias, n, co, ho * wo, y);

  const bool track = tracking(tape, {&x, &weight, &bias});
  auto out = output(Shape{n, co, ho, wo}, std::move(y), track);
  if (track) {
    tape->record([x, weight, bias, out, xcf, g, n, c, co, k, ho, wo, h, w, plane, cokk]() {
      if (!out->has_grad()) return;
      std::vector<T> dcol(cokk * n * plane);
      im2col(out->grad.data(), n, co, ho, wo, k, g, h, w, dcol.data());
      if (x->requires_grad) {
        std::vector<T> dxcf(c * n * plane, T(0));
        detail::gemm_nn(c, n * plane, cokk, weight->data.data(), dcol.data(), dxcf.data());
        x->ensure_grad();
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ci = 0; ci < c; ++ci) {
            T* dst = x->grad.data() + (s * c + ci) * plane;
            const T* src = dxcf.data() + ci * n * plane + s * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
          }
        }
      }
      if (weight->requires_grad) {
        weight->ensure_grad();
        detail::gemm_nt(c, cokk, n * plane, xcf->data(), dcol.data(), weight->grad.data());
      }
      if (wants_grad(bias)) accumulate_channel_bias_grad(out->grad, n, co, ho * wo, *bias);
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> batchnorm2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& gamma,
                         const TensorPtr<T>& beta, BatchNormStats<T>& stats, NormMode mode) {
  require_finite(x, "batchnorm2d");
  require(gamma, "batchnorm2d", "gamma");
  require(beta, "batchnorm2d", "beta");
  require_rank(x, 4, "batchnorm2d", "input");
  const std::size_t n = x->dim(0), c = x->dim(1), plane = x->dim(2) * x->dim(3);
  if (gamma->shape != Shape{c} || beta->shape != Shape{c} || stats.running_mean.size() != c ||
      stats.running_var.size() != c) {
    throw ShapeError("batchnorm2d: affine/statistics size does not match " + std::to_string(c) +
                     " channels");
  }
  const std::size_t count = n * plane;
  const bool use_batch = mode != NormMode::eval;
  if (use_batch && count < 2) {
    throw ShapeError("batchnorm2d: batch statistics need at least 2 values per channel");
  }

  auto xhat = std::make_shared<std::vector<T>>(x->numel());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  std::vector<T> y(x->numel());
  for (std::size_t ci = 0; ci < c; ++ci) {
    T mu, var;
    if (use_batch) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* row = x->data.data() + (s * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += row[i];
      }
      const double m = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* row = x->data.data() + (s * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = row[i] - m;
          sq += d * d;
        }
      }
      const double v = sq / static_cast<double>(count);
      mu = static_cast<T>(m);
      var = static_cast<T>(v);
      if (mode == NormMode::train) {
        const double unbiased = sq / static_cast<double>(count - 1);
        stats.running_mean[ci] =
            stats.momentum * stats.running_mean[ci] + (T(1) - stats.momentum) * mu;
        stats.running_var[ci] = stats.momentum * stats.running_var[ci] +
                                (T(1) - stats.momentum) * static_cast<T>(unbiased);
      }
    } else {
      mu = stats.running_mean[ci];
      var = stats.running_var[ci];
    }
    const T is = T(1) / std::sqrt(var + stats.eps);
    (*inv_std)[ci] = is;
    const T gm = gamma->data[ci], bt = beta->data[ci];
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t base = (s * c + ci) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (x->data[base + i] - mu) * is;
        (*xhat)[base + i] = xh;
        y[base + i] = gm * xh + bt;
      }
    }
  }

  const bool track = tracking(tape, {&x, &gamma, &beta});
  auto out = output(x->shape, std::move(y), track);
  if (track) {
    tape->record([x, gamma, beta, out, xhat, inv_std, use_batch, n, c, plane, count]() {
      if (!out->has_grad()) return;
      const T* dy = out->grad.data();
      for (std::size_t ci = 0; ci < c; ++ci) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t base = (s * c + ci) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += dy[base + i];
            sum_dy_xhat += static_cast<double>(dy[base + i]) * (*xhat)[base + i];
          }
        }
        if (gamma->requires_grad) {
          gamma->ensure_grad();
          gamma->grad[ci] += static_cast<T>(sum_dy_xhat);
        }
        if (beta->requires_grad) {
          beta->ensure_grad();
          beta->grad[ci] += static_cast<T>(sum_dy);
        }
        if (!x->requires_grad) continue;
        x->ensure_grad();
        const T scale_in = gamma->data[ci] * (*inv_std)[ci];
        if (use_batch) {
          const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(count));
          const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(count));
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              x->grad[base + i] +=
                  scale_in * (dy[base + i] - mean_dy - (*xhat)[base + i] * mean_dy_xhat);
            }
          }
        } else {
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) x->grad[base + i] += scale_in * dy[base + i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& x) {
  return unary(
      tape, x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorPtr<T> leaky_relu(Tape<T>* tape, const TensorPtr<T>& x, T slope) {
  return unary(
      tape, x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
TensorPtr<T> tanh(Tape<T>* tape, const TensorPtr<T>& x) {
  return unary(
      tape, x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
TensorPtr<T> sigmoid(Tape<T>* tape, const TensorPtr<T>& x) {
  return unary(
      tape, x, "sigmoid",
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorPtr<T> softmax(Tape<T>* tape, const TensorPtr<T>& x) {
  require_finite(x, "softmax");
  require_rank(x, 2, "softmax", "input");
  const std::size_t n = x->dim(0), c = x->dim(1);
  std::vector<T> y(x->numel());
  for (std::size_t s = 0; s < n; ++s) {
    const T* row = x->data.data() + s * c;
    const T mx = *std::max_element(row, row + c);
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      y[s * c + j] = std::exp(row[j] - mx);
      z += y[s * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) y[s * c + j] /= z;
  }
  const bool track = tracking(tape, {&x});
  auto out = output(x->shape, std::move(y), track);
  if (track) {
    tape->record([x, out, n, c]() {
      if (!out->has_grad()) return;
      x->ensure_grad();
      for (std::size_t s = 0; s < n; ++s) {
        const T* yr = out->data.data() + s * c;
        const T* gr = out->grad.data() + s * c;
        T dot = T(0);
        for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
        for (std::size_t j = 0; j < c; ++j) x->grad[s * c + j] += yr[j] * (gr[j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> reshape(Tape<T>* tape, const TensorPtr<T>& x, Shape shape) {
  require(x, "reshape", "input");
  if (shape_numel(shape) != x->numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(shape));
  }
  const bool track = tracking(tape, {&x});
  auto out = output(std::move(shape), x->data, track);
  if (track) {
    tape->record([x, out]() {
      if (!out->has_grad()) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> spatial_mean(Tape<T>* tape, const TensorPtr<T>& x) {
  require_finite(x, "spatial_mean");
  require_rank(x, 4, "spatial_mean", "input");
  const std::size_t n = x->dim(0), c = x->dim(1), plane = x->dim(2) * x->dim(3);
  std::vector<T> y(n * c);
  for (std::size_t i = 0; i < n * c; ++i) {
    T acc = T(0);
    for (std::size_t p = 0; p < plane; ++p) acc += x->data[i * plane + p];
    y[i] = acc / static_cast<T>(plane);
  }
  const bool track = tracking(tape, {&x});
  auto out = output(Shape{n, c}, std::move(y), track);
  if (track) {
    tape->record([x, out, n, c, plane]() {
      if (!out->has_grad()) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < n * c; ++i) {
        const T g = out->grad[i] / static_cast<T>(plane);
        for (std::size_t p = 0; p < plane; ++p) x->grad[i * plane + p] += g;
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_finite(a, "add");
  require_finite(b, "add");
  require_same_shape(a, b, "add");
  std::vector<T> y(a->numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] + b->data[i];
  const bool track = tracking(tape, {&a, &b});
  auto out = output(a->shape, std::move(y), track);
  if (track) {
    tape->record([a, b, out]() {
      if (!out->has_grad()) return;
      for (const auto& t : {a, b}) {
        if (!t->requires_grad) continue;
        t->ensure_grad();
        for (std::size_t i = 0; i < t->numel(); ++i) t->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> sub(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_finite(a, "sub");
  require_finite(b, "sub");
  require_same_shape(a, b, "sub");
  std::vector<T> y(a->numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] - b->data[i];
  const bool track = tracking(tape, {&a, &b});
  auto out = output(a->shape, std::move(y), track);
  if (track) {
    tape->record([a, b, out]() {
      if (!out->has_grad()) return;
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->numel(); ++i) b->grad[i] -= out->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mul(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_finite(a, "mul");
  require_finite(b, "mul");
  require_same_shape(a, b, "mul");
  std::vector<T> y(a->numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] * b->data[i];
  const bool track = tracking(tape, {&a, &b});
  auto out = output(a->shape, std::move(y), track);
  if (track) {
    tape->record([a, b, out]() {
      if (!out->has_grad()) return;
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i] * b->data[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->numel(); ++i) b->grad[i] += out->grad[i] * a->data[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> scale(Tape<T>* tape, const TensorPtr<T>& x, T factor) {
  return unary(
      tape, x, "scale", [factor](T v) { return factor * v; }, [factor](T, T) { return factor; });
}

template <typename T>
TensorPtr<T> square(Tape<T>* tape, const TensorPtr<T>& x) {
  return unary(
      tape, x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
TensorPtr<T> sum(Tape<T>* tape, const TensorPtr<T>& x) {
  require_finite(x, "sum");
  T acc = T(0);
  for (T v : x->data) acc += v;
  const bool track = tracking(tape, {&x});
  auto out = output(Shape{1}, std::vector<T>{acc}, track);
  if (track) {
    tape->record([x, out]() {
      if (!out->has_grad()) return;
      x->ensure_grad();
      for (auto& g : x->grad) g += out->grad[0];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mean(Tape<T>* tape, const TensorPtr<T>& x) {
  require_finite(x, "mean");
  T acc = T(0);
  for (T v : x->data) acc += v;
  const T inv = T(1) / static_cast<T>(x->numel());
  const bool track = tracking(tape, {&x});
  auto out = output(Shape{1}, std::vector<T>{acc * inv}, track);
  if (track) {
    tape->record([x, out, inv]() {
      if (!out->has_grad()) return;
      x->ensure_grad();
      const T g = out->grad[0] * inv;
      for (auto& v : x->grad) v += g;
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mse_loss(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_finite(a, "mse_loss");
  require_finite(b, "mse_loss");
  require_same_shape(a, b, "mse_loss");
  T acc = T(0);
  for (std::size_t i = 0; i < a->numel(); ++i) {
    const T d = a->data[i] - b->data[i];
    acc += d * d;
  }
  const T inv = T(1) / static_cast<T>(a->numel());
  const bool track = tracking(tape, {&a, &b});
  auto out = output(Shape{1}, std::vector<T>{acc * inv}, track);
  if (track) {
    tape->record([a, b, out, inv]() {
      if (!out->has_grad()) return;
      const T g = T(2) * inv * out->grad[0];
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (std::size_t i = 0; i < a->numel(); ++i) {
        const T d = g * (a->data[i] - b->data[i]);
        if (a->requires_grad) a->grad[i] += d;
        if (b->requires_grad) b->grad[i] -= d;
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> bce_loss(Tape<T>* tape, const TensorPtr<T>& probs, const TensorPtr<T>& targets) {
  require_finite(probs, "bce_loss");
  require_finite(targets, "bce_loss");
  require_same_shape(probs, targets, "bce_loss");
  constexpr T lo = T(1e-7);
  constexpr T hi = T(1) - T(1e-7);
  T acc = T(0);
  for (std::size_t i = 0; i < probs->numel(); ++i) {
    const T p = std::clamp(probs->data[i], lo, hi);
    const T t = targets->data[i];
    acc -= t * std::log(p) + (T(1) - t) * std::log(T(1) - p);
  }
  const T inv = T(1) / static_cast<T>(probs->numel());
  const bool track = tracking(tape, {&probs, &targets});
  auto out = output(Shape{1}, std::vector<T>{acc * inv}, track);
  if (track) {
    tape->record([probs, targets, out, inv, lo, hi]() {
      if (!out->has_grad()) return;
      const T g = inv * out->grad[0];
      if (probs->requires_grad) probs->ensure_grad();
      if (targets->requires_grad) targets->ensure_grad();
      for (std::size_t i = 0; i < probs->numel(); ++i) {
        const T p = std::clamp(probs->data[i], lo, hi);
        const T t = targets->data[i];
        if (probs->requires_grad) probs->grad[i] += g * (p - t) / (p * (T(1) - p));
        if (targets->requires_grad) targets->grad[i] += g * (std::log(T(1) - p) - std::log(p));
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> bce_with_logits(Tape<T>* tape, const TensorPtr<T>& logits, T target) {
  require_finite(logits, "bce_with_logits");
  T acc = T(0);
  for (T v : logits->data) {
    acc += std::max(v, T(0)) - v * target + std::log1p(std::exp(-std::abs(v)));
  }
  const T inv = T(1) / static_cast<T>(logits->numel());
  const bool track = tracking(tape, {&logits});
  auto out = output(Shape{1}, std::vector<T>{acc * inv}, track);
  if (track) {
    tape->record([logits, out, inv, target]() {
      if (!out->has_grad()) return;
      const T g = inv * out->grad[0];
      logits->ensure_grad();
      for (std::size_t i = 0; i < logits->numel(); ++i) {
        const T v = logits->data[i];
        const T p = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
        logits->grad[i] += g * (p - target);
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> cross_entropy(Tape<T>* tape, const TensorPtr<T>& logits, std::span<const int> labels) {
  require_finite(logits, "cross_entropy");
  require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t n = logits->dim(0), c = logits->dim(1);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  auto probs = std::make_shared<std::vector<T>>(n * c);
  T acc = T(0);
  for (std::size_t s = 0; s < n; ++s) {
    const int label = labels[s];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                          std::to_string(c) + ")");
    }
    const T* row = logits->data.data() + s * c;
    const T mx = *std::max_element(row, row + c);
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      (*probs)[s * c + j] = std::exp(row[j] - mx);
      z += (*probs)[s * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[s * c + j] /= z;
    acc += std::log(z) + mx - row[label];
  }
  const T inv = T(1) / static_cast<T>(n);
  const bool track = tracking(tape, {&logits});
  auto out = output(Shape{1}, std::vector<T>{acc * inv}, track);
  if (track) {
    std::vector<int> owned(labels.begin(), labels.end());
    tape->record([logits, out, probs, owned, inv, n, c]() {
      if (!out->has_grad()) return;
      const T g = inv * out->grad[0];
      logits->ensure_grad();
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < c; ++j) {
          const T onehot = static_cast<int>(j) == owned[s] ? T(1) : T(0);
          logits->grad[s * c + j] += g * ((*probs)[s * c + j] - onehot);
        }
      }
    });
  }
  return out;
}

#define DISTILLGAN_INSTANTIATE_OPS(T)                                                              \
  template TensorPtr<T> dense(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&,                 \
                              const TensorPtr<T>&);                                                \
  template TensorPtr<T> conv2d(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&,                \
                               const TensorPtr<T>&, ConvGeometry);                                 \
  template TensorPtr<T> conv_transpose2d(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&,      \
                                         const TensorPtr<T>&, ConvGeometry);                       \
  template TensorPtr<T> batchnorm2d(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&,           \
                                    const TensorPtr<T>&, BatchNormStats<T>&, NormMode);            \
  template TensorPtr<T> relu(Tape<T>*, const TensorPtr<T>&);                                       \
  template TensorPtr<T> leaky_relu(Tape<T>*, const TensorPtr<T>&, T);                              \
  template TensorPtr<T> tanh(Tape<T>*, const TensorPtr<T>&);                                       \
  template TensorPtr<T> sigmoid(Tape<T>*, const TensorPtr<T>&);                                    \
  template TensorPtr<T> softmax(Tape<T>*, const TensorPtr<T>&);                                    \
  template TensorPtr<T> reshape(Tape<T>*, const TensorPtr<T>&, Shape);                             \
  template TensorPtr<T> spatial_mean(Tape<T>*, const TensorPtr<T>&);                               \
  template TensorPtr<T> add(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&);                   \
  template TensorPtr<T> sub(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&);                   \
  template TensorPtr<T> mul(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&);                   \
  template TensorPtr<T> scale(Tape<T>*, const TensorPtr<T>&, T);                                   \
  template TensorPtr<T> square(Tape<T>*, const TensorPtr<T>&);                                     \
  template TensorPtr<T> sum(Tape<T>*, const TensorPtr<T>&);                                        \
  template TensorPtr<T> mean(Tape<T>*, const TensorPtr<T>&);                                       \
  template TensorPtr<T> mse_loss(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&);              \
  template TensorPtr<T> bce_loss(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&);              \
  template TensorPtr<T> bce_with_logits(Tape<T>*, const TensorPtr<T>&, T);                         \
  template TensorPtr<T> cross_entropy(Tape<T>*, const TensorPtr<T>&, std::span<const int>);

DISTILLGAN_INSTANTIATE_OPS(float)
DISTILLGAN_INSTANTIATE_OPS(double)

#undef DISTILLGAN_INSTANTIATE_OPS

}  // namespace distillgan::ops
