#pragma once

#include "etdkf/types.hpp"

#include <cstdint>

namespace etdkf {

enum class NoiseSource : std::uint64_t { InitialState = 0, Process = 1, Measurement = 2 };

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

/// Seed of run `runIndex` under `masterSeed`.
std::uint64_t run_seed(std::uint64_t masterSeed, std::uint64_t runIndex);

/// Stateless Gaussian stream: every draw is a pure function of its address.
class CounterNormal {
 public:
  explicit CounterNormal(std::uint64_t runSeed) : seed_(runSeed) {}

  double normal(std::uint64_t step, NoiseSource src, std::uint64_t index) const;
  Vector normals(std::uint64_t step, NoiseSource src, Eigen::Index count) const;

 private:
  double uniform(std::uint64_t step, std::uint64_t src, std::uint64_t index) const;
  std::uint64_t seed_;
};

}  // namespace etdkf
