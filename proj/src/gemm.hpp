#pragma once

#include <cstddef>
#include <vector>

// Row-major matrix products used by the dense and convolution kernels.
// Every output element is accumulated over the inner dimension in ascending
// order, independent of the outer dimensions, so results do not depend on
// batch size. The j loop is the innermost one and vectorizes.
namespace distillgan::detail {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[p * m + i];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(m, n, k, a, bt.data(), c);
}

}  // namespace distillgan::detail
