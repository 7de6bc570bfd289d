#include "etdkf/rng.hpp"

#include <cmath>
#include <numbers>

namespace etdkf {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }

std::uint64_t run_seed(std::uint64_t masterSeed, std::uint64_t runIndex) {
  return hash_combine(masterSeed, runIndex);
}

double CounterNormal::uniform(std::uint64_t step, std::uint64_t src, std::uint64_t index) const {
  std::uint64_t h = hash_combine(hash_combine(hash_combine(seed_, step), src), index);
  // 53 random bits, shifted away from zero so log() is finite
  return (double(h >> 11) + 0.5) * 0x1.0p-53;
}

double CounterNormal::normal(std::uint64_t step, NoiseSource src, std::uint64_t index) const {
  // Box–Muller; the pair (2i, 2i+1) feeds draw i, the sine branch is unused
  const auto s = static_cast<std::uint64_t>(src);
  double u1 = uniform(step, s, 2 * index);
  double u2 = uniform(step, s, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vector CounterNormal::normals(std::uint64_t step, NoiseSource src, Eigen::Index count) const {
  Vector v(count);
  for (Eigen::Index i = 0; i < count; ++i) v(i) = normal(step, src, std::uint64_t(i));
  return v;
}

}  // namespace etdkf
