#pragma once

#include "lemmse/grid.hpp"

#include <cstdint>
#include <random>

namespace lemmse {

/// Standard normal generator with a fixed, platform-independent algorithm:
/// std::mt19937_64 seeded with `seed`, uniforms u = (bits >> 11) * 2^-53, and
/// the Box-Muller pair sqrt(-2 ln(1 - u1)) * (cos 2 pi u2, sin 2 pi u2),
/// consumed cosine first. (std::normal_distribution is implementation-defined.)
class NormalStream {
public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double next();
  Vector vector(Index n);

private:
  double uniform();

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives independent stream seeds from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

} // namespace lemmse
