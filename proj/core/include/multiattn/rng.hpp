#pragma once

#include <cstdint>
#include <vector>

namespace multiattn {

/// SplitMix64 generator (Steele, Lea & Flood). The state advances by the
/// golden-ratio increment 0x9E3779B97F4A7C15 and every output is the mixed
/// state:
///
///   z = (state += 0x9E3779B97F4A7C15)
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
///
/// Doubles in [0, 1) take the top 53 bits: (next() >> 11) * 2^-53.
/// Integers in [0, n) use rejection on the top of the range so the stream is
/// identical on every platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next() noexcept;
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Fisher-Yates shuffle of `items`.
  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child stream, used to decouple e.g. init from batching.
  SeededRng fork(std::uint64_t salt) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace multiattn
