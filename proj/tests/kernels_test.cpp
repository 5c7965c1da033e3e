#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "bundleforge/kernels.hpp"
#include "bundleforge/rng.hpp"

using namespace bundleforge;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n, float lo = -2.0f,
                              float hi = 2.0f) {
  std::vector<float> v(n);
  for (auto& x : v) x = lo + static_cast<float>(rng.uniform()) * (hi - lo);
  return v;
}

bool bits_equal(float a, float b) {
  std::uint32_t ua, ub;
  std::memcpy(&ua, &a, 4);
  std::memcpy(&ub, &b, 4);
  return ua == ub;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bits_equal(a[i], b[i])) return false;
  return true;
}

const std::vector<std::size_t> kSizes = {0, 1, 2, 3, 7, 8, 9, 15, 16, 17, 31, 33, 64, 67, 128, 251};

bool have_avx2() {
#if defined(BUNDLEFORGE_NO_AVX2)
  return false;
#else
  return kern::detect_backend() == kern::Backend::avx2;
#endif
}

}  // namespace

#if !defined(BUNDLEFORGE_NO_AVX2)

TEST_CASE("avx2 reductions are bit-identical to the scalar reference") {
  if (!have_avx2()) return;
  Rng rng(7);
  for (std::size_t n : kSizes) {
    auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);
    CHECK(bits_equal(kern::ref::sum(x.data(), n), kern::avx2::sum(x.data(), n)));
    CHECK(bits_equal(kern::ref::dot(x.data(), y.data(), n),
                     kern::avx2::dot(x.data(), y.data(), n)));
    if (n > 0)
      CHECK(bits_equal(kern::ref::maxv(x.data(), n), kern::avx2::maxv(x.data(), n)));
  }
}

TEST_CASE("avx2 elementwise kernels are bit-identical to the scalar reference") {
  if (!have_avx2()) return;
  Rng rng(11);
  for (std::size_t n : kSizes) {
    auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);
    const float a = static_cast<float>(rng.uniform()) * 3.0f - 1.5f;
    const float c = static_cast<float>(rng.uniform()) * 2.0f + 0.5f;

    std::vector<float> za(n), zb(n);
    kern::ref::add(za.data(), x.data(), y.data(), n);
    kern::avx2::add(zb.data(), x.data(), y.data(), n);
    CHECK(bits_equal(za, zb));

    kern::ref::sub(za.data(), x.data(), y.data(), n);
    kern::avx2::sub(zb.data(), x.data(), y.data(), n);
    CHECK(bits_equal(za, zb));

    kern::ref::mul(za.data(), x.data(), y.data(), n);
    kern::avx2::mul(zb.data(), x.data(), y.data(), n);
    CHECK(bits_equal(za, zb));

    kern::ref::scale(za.data(), a, x.data(), n);
    kern::avx2::scale(zb.data(), a, x.data(), n);
    CHECK(bits_equal(za, zb));

    kern::ref::sub_const(za.data(), x.data(), c, n);
    kern::avx2::sub_const(zb.data(), x.data(), c, n);
    CHECK(bits_equal(za, zb));

    kern::ref::div_const(za.data(), x.data(), c, n);
    kern::avx2::div_const(zb.data(), x.data(), c, n);
    CHECK(bits_equal(za, zb));

    auto ya = y, yb = y;
    kern::ref::axpy(ya.data(), a, x.data(), n);
    kern::avx2::axpy(yb.data(), a, x.data(), n);
    CHECK(bits_equal(ya, yb));
  }
}

TEST_CASE("avx2 gemm variants are bit-identical to the scalar reference") {
  if (!have_avx2()) return;
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.next_u64() % 13;
    const std::size_t k = 1 + rng.next_u64() % 13;
    const std::size_t n = 1 + rng.next_u64() % 13;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    std::vector<float> ca(m * n, 0.0f), cb(m * n, 0.0f);
    kern::ref::gemm_nn(ca.data(), a.data(), b.data(), m, k, n);
    kern::avx2::gemm_nn(cb.data(), a.data(), b.data(), m, k, n);
    CHECK(bits_equal(ca, cb));

    auto bt = random_vec(rng, n * k);
    std::fill(ca.begin(), ca.end(), 0.0f);
    std::fill(cb.begin(), cb.end(), 0.0f);
    kern::ref::gemm_nt(ca.data(), a.data(), bt.data(), m, k, n);
    kern::avx2::gemm_nt(cb.data(), a.data(), bt.data(), m, k, n);
    CHECK(bits_equal(ca, cb));

    auto at = random_vec(rng, k * m);
    std::fill(ca.begin(), ca.end(), 0.0f);
    std::fill(cb.begin(), cb.end(), 0.0f);
    kern::ref::gemm_tn(ca.data(), at.data(), b.data(), k, m, n);
    kern::avx2::gemm_tn(cb.data(), at.data(), b.data(), k, m, n);
    CHECK(bits_equal(ca, cb));
  }
}

TEST_CASE("avx2 adam update is bit-identical to the scalar reference") {
  if (!have_avx2()) return;
  Rng rng(17);
  for (std::size_t n : kSizes) {
    auto p1 = random_vec(rng, n);
    auto g = random_vec(rng, n);
    auto m1 = random_vec(rng, n, 0.0f, 0.5f);
    auto v1 = random_vec(rng, n, 0.0f, 0.5f);
    auto p2 = p1, m2 = m1, v2 = v1;
    kern::ref::adam_update(p1.data(), g.data(), m1.data(), v1.data(), n, 0.01f,
                           0.9f, 0.999f, 1e-8f, 0.1f, 0.001f);
    kern::avx2::adam_update(p2.data(), g.data(), m2.data(), v2.data(), n, 0.01f,
                            0.9f, 0.999f, 1e-8f, 0.1f, 0.001f);
    CHECK(bits_equal(p1, p2));
    CHECK(bits_equal(m1, m2));
    CHECK(bits_equal(v1, v2));
  }
}

#endif  // !BUNDLEFORGE_NO_AVX2

TEST_CASE("gemm reference matches a naive double-precision oracle") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 1 + rng.next_u64() % 9;
    const std::size_t k = 1 + rng.next_u64() % 9;
    const std::size_t n = 1 + rng.next_u64() % 9;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    std::vector<float> c(m * n, 0.0f);
    kern::ref::gemm_nn(c.data(), a.data(), b.data(), m, k, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk)
          acc += static_cast<double>(a[i * k + kk]) * b[kk * n + j];
        CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-5));
      }
  }
}

TEST_CASE("reduction reference matches naive summation within float tolerance") {
  Rng rng(29);
  for (std::size_t n : kSizes) {
    auto x = random_vec(rng, n);
    double naive = 0.0;
    for (float v : x) naive += v;
    CHECK(kern::ref::sum(x.data(), n) == doctest::Approx(naive).epsilon(1e-5));
  }
}

TEST_CASE("backend dispatch reports an active backend") {
  const kern::Backend b = kern::active_backend();
  CHECK((b == kern::Backend::scalar || b == kern::Backend::avx2));
  CHECK(kern::backend_name(b) != nullptr);
}
