#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace sparse_reptile {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded random stream.
///
/// Engine output of std::mt19937_64 is fixed by the standard; the standard
/// distributions are not, so every draw below is derived from raw engine
/// words to keep streams bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n) {
    const auto bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) {
      x = engine_();
    }
    return static_cast<std::size_t>(x % bound);
  }

  /// Standard normal via Box-Muller; the second variate is discarded so the
  /// stream carries no hidden state besides the engine.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) {
      u1 = uniform();
    }
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = below(i);
      using std::swap;
      swap(values[i - 1], values[j]);
    }
  }

  /// First `count` entries of a uniformly random permutation of [0, n).
  std::vector<std::size_t> choose(std::size_t n, std::size_t count) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = i;
    }
    for (std::size_t i = 0; i < count && i < n; ++i) {
      const std::size_t j = i + below(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(count < n ? count : n);
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

/// Hierarchical stream derivation. Each node is identified by the path of
/// indices from the master seed, so a stream for (seed, meta-iteration, task)
/// does not depend on how many draws any other stream consumed.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t master_seed) : key_(mix64(master_seed)) {}

  [[nodiscard]] SeedTree child(std::uint64_t index) const {
    return SeedTree(Raw{}, mix64(key_ ^ mix64(index ^ 0x6a09e667f3bcc909ULL)));
  }

  [[nodiscard]] Rng rng() const { return Rng(key_); }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

 private:
  struct Raw {};
  SeedTree(Raw, std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
};

/// Top-level stream domains.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSource = 2;
inline constexpr std::uint64_t kTrain = 3;
inline constexpr std::uint64_t kEval = 4;
}  // namespace streams

}  // namespace sparse_reptile
