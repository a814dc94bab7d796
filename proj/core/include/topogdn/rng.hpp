#pragma once

#include <cstdint>
#include <vector>

namespace topogdn {

/// xorshift64* generator seeded through splitmix64.
///
/// Constants: shifts (12, 25, 27), output multiplier 0x2545F4914F6CDD1D;
/// splitmix64 increment 0x9E3779B97F4A7C15. The stream is fully specified by
/// these constants so it can be reproduced bit-for-bit in other languages.
/// Normal deviates use Box-Muller on two uniforms (no cached second value).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Derives an independent child stream; consumes nothing from this one.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace topogdn
