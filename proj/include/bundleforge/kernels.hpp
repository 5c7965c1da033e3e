#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <type_traits>

namespace bundleforge::kern {

// Dense arithmetic kernels: a scalar reference implementation and an AVX2
// variant selected at runtime. Both paths use the same accumulation order,
// so results are bit-identical whichever backend runs:
//
//  - reductions keep eight running partial sums (lane l accumulates
//    elements l, l+8, l+16, ... of the vectorized prefix), combine them
//    as ((s0+s1)+(s2+s3)) + ((s4+s5)+(s6+s7)), then fold the tail
//    elements in left to right;
//  - products and sums stay separate operations (no FMA contraction; the
//    build sets -ffp-contract=off to hold the compiler to the same rule);
//  - transcendentals (exp, log) always go through libm scalar calls.
//
// Doubles exist only for the 64-bit gradient-check replay and always take
// the scalar path.

enum class Backend { scalar, avx2 };

Backend active_backend();
const char* backend_name(Backend b);
// Test hook; pass Backend::scalar to disable AVX2, or reset with detect().
void force_backend(Backend b);
Backend detect_backend();

namespace ref {

template <class T>
T sum(const T* x, std::size_t n) {
  T lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const std::size_t nb = n / 8 * 8;
  for (std::size_t i = 0; i < nb; i += 8)
    for (std::size_t l = 0; l < 8; ++l) lane[l] += x[i + l];
  T s = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
        ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (std::size_t i = nb; i < n; ++i) s += x[i];
  return s;
}

template <class T>
T dot(const T* x, const T* y, std::size_t n) {
  T lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const std::size_t nb = n / 8 * 8;
  for (std::size_t i = 0; i < nb; i += 8)
    for (std::size_t l = 0; l < 8; ++l) lane[l] += x[i + l] * y[i + l];
  T s = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
        ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (std::size_t i = nb; i < n; ++i) s += x[i] * y[i];
  return s;
}

// Max over n >= 1 elements; max is associative so lane order cannot matter,
// but the structure mirrors the other reductions anyway.
template <class T>
T maxv(const T* x, std::size_t n) {
  T m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

template <class T>
void add(T* z, const T* x, const T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

template <class T>
void sub(T* z, const T* x, const T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
}

template <class T>
void mul(T* z, const T* x, const T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

// y += a * x
template <class T>
void axpy(T* y, T a, const T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// z = a * x (z may alias x)
template <class T>
void scale(T* z, T a, const T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i];
}

// z = x - c (z may alias x)
template <class T>
void sub_const(T* z, const T* x, T c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - c;
}

// z = x / c, true division (z may alias x)
template <class T>
void div_const(T* z, const T* x, T c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] / c;
}

// C(m x n) += A(m x k) * B(k x n), all row-major. axpy accumulation: each
// output column is updated independently in k-order.
template <class T>
void gemm_nn(T* c, const T* a, const T* b, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) axpy(ci, ai[kk], b + kk * n, n);
  }
}

// C(m x n) += A(m x d) * B(n x d)^T: row-dot form.
template <class T>
void gemm_nt(T* c, const T* a, const T* b, std::size_t m, std::size_t d,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] += dot(a + i * d, b + j * d, d);
}

// C(m x n) += A(k x m)^T * B(k x n): axpy accumulation over k.
template <class T>
void gemm_tn(T* c, const T* a, const T* b, std::size_t k, std::size_t m,
             std::size_t n) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* bk = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) axpy(c + i * n, a[kk * m + i], bk, n);
  }
}

// One Adam update over a flat parameter: c1 = 1 - beta1^t, c2 = 1 - beta2^t
// are precomputed by the caller. Expression order is part of the contract.
template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1,
                 T beta2, T eps, T c1, T c2) {
  const T om1 = T(1) - beta1;
  const T om2 = T(1) - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + om1 * g[i];
    v[i] = beta2 * v[i] + om2 * (g[i] * g[i]);
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    p[i] = p[i] - (lr * mhat) / (std::sqrt(vhat) + eps);
  }
}

}  // namespace ref

#if !defined(BUNDLEFORGE_NO_AVX2)
namespace avx2 {
float sum(const float* x, std::size_t n);
float dot(const float* x, const float* y, std::size_t n);
float maxv(const float* x, std::size_t n);
void add(float* z, const float* x, const float* y, std::size_t n);
void sub(float* z, const float* x, const float* y, std::size_t n);
void mul(float* z, const float* x, const float* y, std::size_t n);
void axpy(float* y, float a, const float* x, std::size_t n);
void scale(float* z, float a, const float* x, std::size_t n);
void sub_const(float* z, const float* x, float c, std::size_t n);
void div_const(float* z, const float* x, float c, std::size_t n);
void gemm_nn(float* c, const float* a, const float* b, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_nt(float* c, const float* a, const float* b, std::size_t m,
             std::size_t d, std::size_t n);
void gemm_tn(float* c, const float* a, const float* b, std::size_t k,
             std::size_t m, std::size_t n);
void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 float lr, float beta1, float beta2, float eps, float c1,
                 float c2);
}  // namespace avx2
#endif

inline bool use_avx2() {
#if defined(BUNDLEFORGE_NO_AVX2)
  return false;
#else
  return active_backend() == Backend::avx2;
#endif
}

// Dispatching front ends. float consults the active backend; every other
// scalar type takes the reference path.

template <class T>
T sum(const T* x, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::sum(x, n);
#endif
  return ref::sum(x, n);
}

template <class T>
T dot(const T* x, const T* y, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::dot(x, y, n);
#endif
  return ref::dot(x, y, n);
}

template <class T>
T maxv(const T* x, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::maxv(x, n);
#endif
  return ref::maxv(x, n);
}

template <class T>
void add(T* z, const T* x, const T* y, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::add(z, x, y, n);
#endif
  ref::add(z, x, y, n);
}

template <class T>
void sub(T* z, const T* x, const T* y, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::sub(z, x, y, n);
#endif
  ref::sub(z, x, y, n);
}

template <class T>
void mul(T* z, const T* x, const T* y, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::mul(z, x, y, n);
#endif
  ref::mul(z, x, y, n);
}

template <class T>
void axpy(T* y, T a, const T* x, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::axpy(y, a, x, n);
#endif
  ref::axpy(y, a, x, n);
}

template <class T>
void scale(T* z, T a, const T* x, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::scale(z, a, x, n);
#endif
  ref::scale(z, a, x, n);
}

template <class T>
void sub_const(T* z, const T* x, T c, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::sub_const(z, x, c, n);
#endif
  ref::sub_const(z, x, c, n);
}

template <class T>
void div_const(T* z, const T* x, T c, std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::div_const(z, x, c, n);
#endif
  ref::div_const(z, x, c, n);
}

template <class T>
void gemm_nn(T* c, const T* a, const T* b, std::size_t m, std::size_t k,
             std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::gemm_nn(c, a, b, m, k, n);
#endif
  ref::gemm_nn(c, a, b, m, k, n);
}

template <class T>
void gemm_nt(T* c, const T* a, const T* b, std::size_t m, std::size_t d,
             std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::gemm_nt(c, a, b, m, d, n);
#endif
  ref::gemm_nt(c, a, b, m, d, n);
}

template <class T>
void gemm_tn(T* c, const T* a, const T* b, std::size_t k, std::size_t m,
             std::size_t n) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2()) return avx2::gemm_tn(c, a, b, k, m, n);
#endif
  ref::gemm_tn(c, a, b, k, m, n);
}

template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1,
                 T beta2, T eps, T c1, T c2) {
#if !defined(BUNDLEFORGE_NO_AVX2)
  if constexpr (std::is_same_v<T, float>)
    if (use_avx2())
      return avx2::adam_update(p, g, m, v, n, lr, beta1, beta2, eps, c1, c2);
#endif
  ref::adam_update(p, g, m, v, n, lr, beta1, beta2, eps, c1, c2);
}

}  // namespace bundleforge::kern
