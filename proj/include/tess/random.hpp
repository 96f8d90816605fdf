#pragma once

#include "tess/types.hpp"

#include <cstdint>
#include <random>

namespace tess {

using Rng = std::mt19937_64;

// Named substreams. Every random draw in a run is keyed by
// (master seed, stream, chain, iteration), so results never depend on the
// order in which chains are visited.
enum class Stream : std::uint64_t {
  init = 1,
  pretrain = 2,
  warmup = 3,
  sampling = 4,
  stein = 5,
  monitor = 6,
  flow_init = 7,
  data = 8,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t chain, std::uint64_t iteration) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed),  hi(seed),  lo(static_cast<std::uint64_t>(stream)),
                    lo(chain), hi(chain), lo(iteration),
                    hi(iteration)};
  return Rng(seq);
}

inline Vector standard_normal(Rng& rng, Eigen::Index d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

/// Uniform on the open interval (0, 1); never returns 0 so log() is finite.
inline double uniform_open(Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double w = 0.0;
  while (w == 0.0) w = unif(rng);
  return w;
}

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> unif(lo, hi);
  return unif(rng);
}

}  // namespace tess
