#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace bae {

/// Independent random streams derived from one master seed.
enum class Stream : std::uint64_t {
  kEnv = 1,
  kPolicy = 2,
  kAugment = 3,
  kEval = 4,
  kInit = 5,
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, Stream stream);

/// Seeded generator with library-independent distributions, so sequences are
/// reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t master, Stream stream) : engine_(derive_seed(master, stream)) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  double normal();
  /// Draws an index with probability proportional to probs[i].
  std::size_t categorical(std::span<const double> probs);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) std::swap(first[i - 1], first[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bae
