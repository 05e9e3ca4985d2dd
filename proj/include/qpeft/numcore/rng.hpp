#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "qpeft/numcore/matrix.hpp"

namespace qpeft {

/// SplitMix64 step; used for seeding and for labelled seed derivation.
constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a over the label bytes.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Child seed for a named purpose ("lm-init", "qd-init", "shuffle", ...).
/// Changing how one purpose consumes its stream never shifts another's.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  std::uint64_t s = root ^ fnv1a64(label);
  return splitmix64(s);
}

/// xoshiro256** generator seeded through SplitMix64.
///
/// All derived draws use integer arithmetic or exact dyadic sums so the
/// stream is bit-identical on every IEEE-754 platform; no libm call is made.
class Rng {
public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next_u64() {
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

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n); unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw ContractError("uniform_int: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Approximately standard normal: Irwin-Hall sum of twelve uniforms minus 6.
  double normal() {
    double acc = 0.0;
    for (int i = 0; i < 12; ++i) acc += uniform();
    return acc - 6.0;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <typename Scalar>
  Matrix<Scalar> normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<Scalar>(stddev * normal());
    }
    return m;
  }

private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace qpeft
