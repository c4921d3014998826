#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace zeq {

// Stream definition (stable across platforms and languages):
//   splitmix64(x): x += 0x9e3779b97f4a7c15; z = x;
//                  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9;
//                  z = (z ^ (z >> 27)) * 0x94d049bb133111eb; return z ^ (z >> 31).
//   sample seed  = splitmix64(splitmix64(splitmix64(master) ^ N) ^ index).
//   generator    = xoshiro256** whose four state words are successive splitmix64
//                  outputs starting from the sample seed.
//   uniform      = (next() >> 11) * 2^-53, mapped to (0, 1] for the logarithm.
//   normal pair  = Box-Muller; complex normal = (g1 + i g2) / sqrt(2).

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t sample_seed(std::uint64_t master, std::uint64_t degree, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(master) ^ degree) ^ index);
}

class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) {
      x = splitmix64(x);
      w = x;
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard complex Gaussian: E|c|^2 = 1, real and imaginary parts N(0, 1/2).
  std::complex<double> complex_normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-std::log(u1));  // sqrt(-2 log u) / sqrt(2)
    const double th = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(th), r * std::sin(th)};
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace zeq
