#pragma once

#include <cstddef>
#include <cstring>
#include <span>
#include <vector>

namespace kgbilm::kernels {

// Dense row-major GEMM variants used by the differentiable ops. All of them
// accumulate into `c`. Loop orders keep the innermost access contiguous.

namespace detail {

template <class T>
struct Lanes {
  static constexpr std::size_t kWidth = 32 / sizeof(T);
  using type __attribute__((vector_size(32))) = T;
};

template <class T>
inline void axpy_rows(const T* a, const T* b, T* c, std::size_t rows, std::size_t k, std::size_t m,
                      std::size_t j0) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* __restrict cr = c + r * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[r * k + p];
      const T* __restrict bp = b + p * m;
      for (std::size_t j = j0; j < m; ++j) cr[j] += av * bp[j];
    }
  }
}

}  // namespace detail

/// c[n x m] += a[n x k] * b[k x m]
///
/// 4-row by 2-vector register tiles; every c element still accumulates its
/// products in p order, so results match the plain triple loop exactly.
template <class T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
             std::size_t k, std::size_t m) {
  using V = typename detail::Lanes<T>::type;
  constexpr std::size_t L = detail::Lanes<T>::kWidth, R = 4, C = 2, W = L * C;
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  std::size_t i = 0;
  for (; i + R <= n; i += R) {
    std::size_t j = 0;
    for (; j + W <= m; j += W) {
      V acc[R][C];
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t q = 0; q < C; ++q) std::memcpy(&acc[r][q], pc + (i + r) * m + j + q * L, sizeof(V));
      for (std::size_t p = 0; p < k; ++p) {
        V bv[C];
        for (std::size_t q = 0; q < C; ++q) std::memcpy(&bv[q], pb + p * m + j + q * L, sizeof(V));
        for (std::size_t r = 0; r < R; ++r) {
          const T av = pa[(i + r) * k + p];
          for (std::size_t q = 0; q < C; ++q) acc[r][q] += av * bv[q];
        }
      }
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t q = 0; q < C; ++q) std::memcpy(pc + (i + r) * m + j + q * L, &acc[r][q], sizeof(V));
    }
    if (j < m) detail::axpy_rows(pa + i * k, pb, pc + i * m, R, k, m, j);
  }
  if (i < n) detail::axpy_rows(pa + i * k, pb, pc + i * m, n - i, k, m, 0);
}

/// c[n x m] += a[n x k] * b[m x k]^T
///
/// b is transposed into scratch first so the inner loop is a contiguous axpy
/// rather than a reduction (which the compiler will not vectorize without
/// relaxed floating-point semantics).
template <class T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
             std::size_t k, std::size_t m) {
  std::vector<T> bt(k * m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * m + j] = b[j * k + p];
  gemm_nn<T>(a, bt, c, n, k, m);
}

/// c[n x m] += a[k x n]^T * b[k x m]
template <class T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t k,
             std::size_t n, std::size_t m) {
  std::vector<T> at(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < n; ++i) at[i * k + p] = a[p * n + i];
  gemm_nn<T>(at, b, c, n, k, m);
}

}  // namespace kgbilm::kernels
