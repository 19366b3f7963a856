#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "popgame/types.hpp"

namespace popgame {

// Seeded draws used across the library. std::mt19937_64 is bit-exact on
// every conforming standard library, but the std::*_distribution adapters
// are implementation-defined, so the transforms below are done by hand to
// keep seeded runs portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform on [0, 1): top 53 bits of the engine output as a mantissa.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; never zero, so logs stay finite.
  double uniform_pos() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double exponential() { return -std::log(uniform_pos()); }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

// Uniform (flat Dirichlet) draw from the simplex of dimension m: normalized
// iid exponentials.
inline Vec dirichlet_uniform(Rng& rng, int m) {
  Vec g(m);
  for (int i = 0; i < m; ++i) g[i] = rng.exponential();
  return g / g.sum();
}

// Gain matrix with every entry drawn uniform on (lo, hi]; the half-open
// interval keeps gains strictly above lo (gains must stay positive when
// lo = 0). Diagonal entries are drawn too: self-rates never enter the
// dynamics, but a full matrix keeps the draw order independent of how the
// matrix is consumed.
inline Mat random_gains(Rng& rng, int m, double lo, double hi) {
  Mat k(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) k(i, j) = lo + (hi - lo) * rng.uniform_pos();
  return k;
}

// Derives an independent seed for a named sub-purpose (gain draws, initial
// conditions, check sampling, ...) from a base seed, so the streams do not
// alias. One splitmix64 round.
inline std::uint64_t sub_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace popgame
