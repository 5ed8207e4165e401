#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace rgp {

/// Seeded random source with a fully specified output sequence: the
/// std::mt19937_64 engine (its sequence is fixed by the C++ standard), with
/// every variate derived here by explicit arithmetic so datasets reproduce
/// across standard libraries.
///   uniform: ((x >> 11) + 0.5) * 2^-53, strictly inside (0, 1)
///   normal:  inverse CDF of one uniform
///   index:   rejection sampling on the top bits
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);

/// base_seed XOR mix64(stream): per-replication / per-purpose seeds.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t stream) {
  return base_seed ^ mix64(stream);
}

}  // namespace rgp
