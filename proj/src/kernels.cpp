#include "bundleforge/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace bundleforge::kern {

namespace {

Backend g_backend = []() {
  const char* env = std::getenv("BUNDLEFORGE_KERNEL");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0) return Backend::avx2;
  }
  return detect_backend();
}();

}  // namespace

Backend detect_backend() {
#if defined(BUNDLEFORGE_NO_AVX2)
  return Backend::scalar;
#else
#if defined(__GNUC__) || defined(__clang__)
  if (__builtin_cpu_supports("avx2")) return Backend::avx2;
#endif
  return Backend::scalar;
#endif
}

Backend active_backend() { return g_backend; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
  }
  return "unknown";
}

void force_backend(Backend b) { g_backend = b; }

}  // namespace bundleforge::kern
