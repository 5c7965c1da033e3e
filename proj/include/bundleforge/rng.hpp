#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace bundleforge {

// Counter-based PRNG used for every random decision in the project.
// The recurrence is the splitmix64 finalizer over an additive Weyl counter:
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   out = z ^ (z >> 31)
//
// Identical seeds give identical streams on every platform, which is what
// the whole-pipeline determinism guarantees rest on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1), 53 bits of entropy.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi] inclusive. Requires lo <= hi.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Standard normal via Box-Muller; the spare value is cached so draws
  // consume the underlying stream deterministically.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Pipeline stages draw from sub-seeds derived as root xor a stage id,
// scrambled once, so each stage is independently reproducible.
enum class Stage : std::uint64_t {
  synth = 1,
  feedback = 2,
  teacher = 3,
  student = 4,
  eval = 5,
  split = 6,
  val_cases = 7,
};

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t salt) {
  Rng r(root ^ (salt * 0x9E3779B97F4A7C15ULL));
  return r.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t root, Stage stage) {
  return derive_seed(root, static_cast<std::uint64_t>(stage));
}

}  // namespace bundleforge
