#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>

namespace tailspin {

// SplitMix64 finalizer. Every random stream in the library is seeded through
// this function so that alternate implementations can reproduce it:
//   z += 0x9e3779b97f4a7c15
//   z  = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
//   z  = (z ^ (z >> 27)) * 0x94d049bb133111eb
//   z  =  z ^ (z >> 31)
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// derive_seed(s, a, b, ...) = mix(...mix(mix(s) ^ a) ^ b ...)
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

// Purpose tags for per-purpose seed derivation from run.seed.
namespace seed_purpose {
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t imbalance = 2;
inline constexpr std::uint64_t noise = 3;
inline constexpr std::uint64_t shuffle = 4;
inline constexpr std::uint64_t init = 5;
inline constexpr std::uint64_t augmentation = 6;
inline constexpr std::uint64_t test_data = 7;
}  // namespace seed_purpose

// Sequential SplitMix64 stream. Distribution transforms are fixed here rather
// than delegated to <random>, whose distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-sampled to remove modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Box-Muller, one output per two uniforms (no cached spare).
  double normal() noexcept;

  template <class T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace tailspin
