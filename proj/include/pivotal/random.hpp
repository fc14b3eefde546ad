#pragma once

// Seeded random streams. All randomness in the library flows through Rng so
// that a master seed reproduces every stage.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace pivotal {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed for sub-stream `stream` of `master`: mix64(master + (stream + 1) * 0x9E3779B97F4A7C15).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Gamma(shape, rate = 1).
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
  double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }
  /// Index drawn with probability proportional to `weights` (non-negative, positive sum).
  int categorical(std::span<const double> weights);
  /// Index drawn with probability proportional to exp(log_weights).
  int categorical_log(std::span<const double> log_weights);
  std::vector<double> dirichlet(std::span<const double> alpha);
  /// Uniform random permutation of 0..n-1.
  std::vector<int> permutation(int n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pivotal
