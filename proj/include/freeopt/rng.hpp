#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace freeopt {

// Counter-based generator: draw i of stream s under seed k is
// splitmix64_mix(key(k, s) + i * golden_gamma). Any draw can be computed
// independently, so common random numbers across sweep cells and parallel
// partitions of the index space come for free. The construction is the
// SplitMix64 output function (Steele, Lea, Flood 2014) applied to a keyed
// counter; outputs are identical on every platform.
inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  static constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;

  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(splitmix64_mix(splitmix64_mix(seed ^ 0x6a09e667f3bcc909ULL) + stream * golden_gamma)) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return splitmix64_mix(key_ + (counter + 1) * golden_gamma);
  }

  // Uniform on the open interval (0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on counters (2i, 2i+1); only the cosine
  // branch is used so draw i never depends on any other draw.
  double normal(std::uint64_t i) const noexcept {
    const double u1 = uniform(2 * i);
    const double u2 = uniform(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

// Sequential cursor over a CounterRng stream.
class RngStream {
 public:
  constexpr RngStream(std::uint64_t seed, std::uint64_t stream) noexcept : rng_(seed, stream) {}
  double uniform() noexcept { return rng_.uniform(next_++); }
  double normal() noexcept { return rng_.normal(next_++); }
  std::uint64_t bits() noexcept { return rng_.bits(next_++); }
  std::uint64_t position() const noexcept { return next_; }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace freeopt
