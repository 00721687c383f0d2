#pragma once

// Seeded generator with derivable substreams.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The distributions below are implemented here rather than taken
// from <random> because the standard leaves their algorithms unspecified, and
// serialized instances must reproduce byte-for-byte across toolchains.
//
//   seed material : splitmix64(seed) ^ splitmix64(stream + golden)
//   below(n)      : Lemire's multiply-shift with rejection (unbiased)
//   uniform()     : top 53 bits / 2^53, in [0, 1)
//   normal()      : Box-Muller, second variate cached

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>

namespace rhm {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)), engine_(key_) {}

  /// Independent child stream. Depends only on this generator's key and the
  /// stream id, never on how many numbers have been drawn so far.
  Rng derive(std::uint64_t stream) const { return Rng(key_, stream); }

  std::uint64_t key() const { return key_; }

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    unsigned __int128 prod = static_cast<unsigned __int128>(next()) * n;
    auto low = static_cast<std::uint64_t>(prod);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        prod = static_cast<unsigned __int128>(next()) * n;
        low = static_cast<std::uint64_t>(prod);
      }
    }
    return static_cast<std::uint64_t>(prod >> 64);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Fisher-Yates, deterministic given the stream.
  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rhm
