// AVX2 variants of the dense kernels. Accumulation order matches the scalar
// reference exactly (see kernels.hpp), so outputs are bit-identical: mul and
// add stay separate (no FMA), reductions are 8 vertical lanes combined in
// the fixed tree, tails run the same scalar loop.

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "bundleforge/kernels.hpp"

namespace bundleforge::kern::avx2 {

namespace {

inline float reduce_tree(__m256 acc) {
  alignas(32) float lane[8];
  _mm256_store_ps(lane, acc);
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
         ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

}  // namespace

float sum(const float* x, std::size_t n) {
  const std::size_t nb = n / 8 * 8;
  __m256 acc = _mm256_setzero_ps();
  for (std::size_t i = 0; i < nb; i += 8)
    acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float s = reduce_tree(acc);
  for (std::size_t i = nb; i < n; ++i) s += x[i];
  return s;
}

float dot(const float* x, const float* y, std::size_t n) {
  const std::size_t nb = n / 8 * 8;
  __m256 acc = _mm256_setzero_ps();
  for (std::size_t i = 0; i < nb; i += 8)
    acc = _mm256_add_ps(acc,
                        _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  float s = reduce_tree(acc);
  for (std::size_t i = nb; i < n; ++i) s += x[i] * y[i];
  return s;
}

float maxv(const float* x, std::size_t n) {
  // max is associative and commutative on finite inputs, so lane order is
  // irrelevant; inputs are finite by the callers' contracts.
  std::size_t i = 0;
  float m = x[0];
  if (n >= 8) {
    __m256 vm = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(x + i));
    alignas(32) float lane[8];
    _mm256_store_ps(lane, vm);
    m = lane[0];
    for (int l = 1; l < 8; ++l) m = lane[l] > m ? lane[l] : m;
  } else {
    i = 1;
  }
  for (; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void add(float* z, const float* x, const float* y, std::size_t n) {
  const std::size_t nb = n / 8 * 8;
  for (std::size_t i = 0; i < nb; i += 8)
    _mm256_storeu_ps(z + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (std::size_t i = nb; i < n; ++i) z[i] = x[i] + y[i];
}

void sub(float* z, const float* x, const float* y, std::size_t n) {
  const std::size_t nb = n / 8 * 8;
  for (std::size_t i = 0; i < nb; i += 8)
    _mm256_storeu_ps(z + i, _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (std::size_t i = nb; i < n; ++i) z[i] = x[i] - y[i];
}

void mul(float* z, const float* x, const float* y, std::size_t n) {
  const std::size_t nb = n / 8 * 8;
  for (std::size_t i = 0; i < nb; i += 8)
    _mm256_storeu_ps(z + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (std::size_t i = nb; i < n; ++i) z[i] = x[i] * y[i];
}

void axpy(float* y, float a, const float* x, std::size_t n) {
  const std::size_t nb = n / 8 * 8;
  const __m256 va = _mm256_set1_ps(a);
  for (std::size_t i = 0; i < nb; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_add_ps(_mm256_loadu_ps(y + i),
                             _mm256_mul_ps(va, _mm256_loadu_ps(x + i))));
  for (std::size_t i = nb; i < n; ++i) y[i] += a * x[i];
}

void scale(float* z, float a, const float* x, std::size_t n) {
  const std::size_t nb = n / 8 * 8;
  const __m256 va = _mm256_set1_ps(a);
  for (std::size_t i = 0; i < nb; i += 8)
    _mm256_storeu_ps(z + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (std::size_t i = nb; i < n; ++i) z[i] = a * x[i];
}

void sub_const(float* z, const float* x, float c, std::size_t n) {
  const std::size_t nb = n / 8 * 8;
  const __m256 vc = _mm256_set1_ps(c);
  for (std::size_t i = 0; i < nb; i += 8)
    _mm256_storeu_ps(z + i, _mm256_sub_ps(_mm256_loadu_ps(x + i), vc));
  for (std::size_t i = nb; i < n; ++i) z[i] = x[i] - c;
}

void div_const(float* z, const float* x, float c, std::size_t n) {
  const std::size_t nb = n / 8 * 8;
  const __m256 vc = _mm256_set1_ps(c);
  for (std::size_t i = 0; i < nb; i += 8)
    _mm256_storeu_ps(z + i, _mm256_div_ps(_mm256_loadu_ps(x + i), vc));
  for (std::size_t i = nb; i < n; ++i) z[i] = x[i] / c;
}

void gemm_nn(float* c, const float* a, const float* b, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    float* ci = c + i * n;
    const float* ai = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) axpy(ci, ai[kk], b + kk * n, n);
  }
}

void gemm_nt(float* c, const float* a, const float* b, std::size_t m,
             std::size_t d, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * n + j] += dot(a + i * d, b + j * d, d);
}

void gemm_tn(float* c, const float* a, const float* b, std::size_t k,
             std::size_t m, std::size_t n) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const float* bk = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) axpy(c + i * n, a[kk * m + i], bk, n);
  }
}

void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 float lr, float beta1, float beta2, float eps, float c1,
                 float c2) {
  const float om1 = 1.0f - beta1;
  const float om2 = 1.0f - beta2;
  const std::size_t nb = n / 8 * 8;
  const __m256 vb1 = _mm256_set1_ps(beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2);
  const __m256 vo1 = _mm256_set1_ps(om1);
  const __m256 vo2 = _mm256_set1_ps(om2);
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 veps = _mm256_set1_ps(eps);
  const __m256 vc1 = _mm256_set1_ps(c1);
  const __m256 vc2 = _mm256_set1_ps(c2);
  for (std::size_t i = 0; i < nb; i += 8) {
    const __m256 vg = _mm256_loadu_ps(g + i);
    __m256 vm = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)),
                              _mm256_mul_ps(vo1, vg));
    __m256 vv = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)),
                              _mm256_mul_ps(vo2, _mm256_mul_ps(vg, vg)));
    _mm256_storeu_ps(m + i, vm);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_div_ps(vm, vc1);
    const __m256 vhat = _mm256_div_ps(vv, vc2);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat),
                                     _mm256_add_ps(_mm256_sqrt_ps(vhat), veps));
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
  }
  for (std::size_t i = nb; i < n; ++i) {
    m[i] = beta1 * m[i] + om1 * g[i];
    v[i] = beta2 * v[i] + om2 * (g[i] * g[i]);
    const float mhat = m[i] / c1;
    const float vhat = v[i] / c2;
    p[i] = p[i] - (lr * mhat) / (std::sqrt(vhat) + eps);
  }
}

}  // namespace bundleforge::kern::avx2
