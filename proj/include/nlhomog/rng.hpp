#pragma once

// Counter-based sampling: every coefficient cell value is a pure function of
// (master seed, lattice cell index), so fields are reproducible bit-exactly
// independent of box size, traversal order, or worker count.

#include <cstdint>

#include "nlhomog/common.hpp"

namespace nlhomog {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// zigzag: signed lattice coordinate -> unsigned, bijective
inline std::uint64_t zigzag(std::int64_t z) {
  return (static_cast<std::uint64_t>(z) << 1) ^
         static_cast<std::uint64_t>(z >> 63);
}

// Hash of one lattice cell under a master seed.  The fold is per-axis with a
// distinct salt so (x,y) and (y,x) decorrelate.
inline std::uint64_t cell_hash(std::uint64_t seed, int dim,
                               const std::array<std::int64_t, kMaxDim>& z) {
  std::uint64_t h = splitmix64(seed ^ 0xA0761D6478BD642Full);
  for (int i = 0; i < dim; ++i) {
    h = splitmix64(h ^ (zigzag(z[i]) + 0x9E3779B97F4A7C15ull *
                                           static_cast<std::uint64_t>(i + 1)));
  }
  return h;
}

// uniform double in [0,1) from 53 high bits
inline double uniform01(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Per-member seeds for ensembles.  The master is hashed before the index
// is mixed in, so nearby masters never share seed sets.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) + index);
}

}  // namespace nlhomog
