#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace irbm {

/// Identifies what a random stream is used for. Part of the stream key, so
/// adding or skipping draws in one purpose never shifts another.
enum class StreamPurpose : std::uint32_t {
  kPermutation = 1,
  kPositive = 2,
  kNegative = 3,
  kChainInit = 4,
  kShuffle = 5,
  kAis = 6,
  kEvalPermutation = 7,
  kBootstrap = 8,
  kSampling = 9,
  kBinarize = 10,
  kSynthetic = 11,
  kCheck = 12,
  kLabelNegative = 13,
};

/// Counter-keyed random stream: the state is a pure function of
/// (seed, purpose, counter, index), so any (step, chain) pair can be
/// regenerated independently of evaluation order.
class RngStream {
 public:
  RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t counter = 0,
            std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose),
                      static_cast<std::uint32_t>(counter),
                      static_cast<std::uint32_t>(counter >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). Rejection sampling keeps it exact.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    // Box-Muller; the standard distributions are implementation-defined.
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace irbm
