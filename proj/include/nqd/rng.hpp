#pragma once

#include <cmath>
#include <cstdint>

namespace nqd {

/// SplitMix64 output function (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ull;

/// Counter-based stream: draw i is a pure function of (key, i), so any
/// sample of any path can be regenerated without replaying the stream.
class CounterStream {
 public:
  constexpr CounterStream(std::uint64_t master_seed, std::uint64_t path) noexcept
      : key_(splitmix64_mix(splitmix64_mix(master_seed + kGoldenGamma) ^ (path * 0xd1b54a32d192ed03ull + 1))) {}

  [[nodiscard]] constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return splitmix64_mix(key_ + (counter + 1) * kGoldenGamma);
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  [[nodiscard]] constexpr double uniform(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal from two uniforms at counters 2c, 2c+1 (Box-Muller,
  /// cosine branch only so that each normal owns its own counters).
  [[nodiscard]] double normal(std::uint64_t counter) const noexcept {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
  }

  [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace nqd
