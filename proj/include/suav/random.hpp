#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace suav {

/// splitmix64 finalizer; used to derive independent sub-stream seeds.
std::uint64_t mix_seed(std::uint64_t value);

/// Derives a child seed from a master seed and a stream label/index.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t index = 0);

/// Random stream owned by the caller and passed explicitly into every
/// stochastic operation. Distributions are implemented here rather than via
/// <random> distribution objects so that streams are reproducible across
/// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  bool bernoulli(double p);
  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();
  /// Exponential with unit mean.
  double exponential();
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  /// Index drawn with probability proportional to weights (must sum > 0).
  std::size_t categorical(std::span<const double> probabilities);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace suav
