#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "tblab/hash.hpp"

namespace tblab {

// SplitMix64. Hand-rolled so streams are identical on every platform and
// independent of the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // [0, n)
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Box-Muller, no spare caching so the stream advances predictably.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream for a labeled sub-task.
  Rng child(std::string_view label) const {
    return Rng(fnv1a64(label) ^ (state_ * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull));
  }

  Rng child(std::string_view label, std::uint64_t index) const {
    std::uint64_t h = fnv1a64(label);
    h ^= index + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return Rng(h ^ (state_ * 0xd1342543de82ef95ull + 1));
  }

 private:
  std::uint64_t state_;
};

}  // namespace tblab
