#ifndef VSDOA_RANDOM_HPP
#define VSDOA_RANDOM_HPP

#include <cstdint>
#include <random>
#include <span>

namespace vsdoa {

// Seeded random stream. The engine output is fixed by the standard; the
// distributions below are implemented here rather than taken from <random>
// so that a seed yields the same values with every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Standard normal (Marsaglia polar method).
  double normal();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Per-item seed derived from a master seed and an index; pure 64-bit integer
// arithmetic so that derived streams match across machines.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index);

}  // namespace vsdoa

#endif  // VSDOA_RANDOM_HPP
