#pragma once

#include <cstdint>
#include <random>

#include "pbens/types.hpp"

namespace pbens {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for an independent stream, a pure function of (master, stream).
/// Particle i of an ensemble always gets derive_seed(master, i), so the
/// particle count and thread count never change any particle's draws.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  Vector normal_vector(Index n, double sd = 1.0);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace pbens
