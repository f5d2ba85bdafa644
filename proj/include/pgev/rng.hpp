#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace pgev {

/// Counter-based 64-bit generator: output i is the SplitMix64 finalizer applied
/// to key + i * golden_gamma. Streams are addressed by (key, counter), so any
/// draw can be reproduced without replaying the ones before it.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  /// Derives an independent sub-stream from a root seed, a stage name and an
  /// index (pixel, replicate, year...).
  static CounterRng stream(std::uint64_t root_seed, std::string_view name,
                           std::uint64_t index = 0) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the name
    for (char ch : name) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
    std::uint64_t key = mix(root_seed ^ mix(h));
    key = mix(key + mix(index + kGamma));
    return CounterRng(key);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return mix(key_ + (++counter_) * kGamma); }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (one value per call, second discarded).
  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; the bias is < n / 2^64 and irrelevant here.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace pgev
