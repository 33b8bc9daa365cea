#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace cpl {

/// xoshiro256** (Blackman & Vigna), seeded through splitmix64.
///
/// Every sampler in the library derives from this generator so that results
/// are reproducible across platforms and standard libraries:
///   - uniform():  top 53 bits scaled by 2^-53, value in [0, 1)
///   - below(n):   Lemire's nearly-divisionless bounded integer
///   - normal():   Box-Muller on two uniform() draws, cosine branch only
/// The std <random> distributions are avoided on purpose: their output is
/// implementation defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next();
  double uniform();
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// In-place Fisher-Yates shuffle, last index first.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace cpl
