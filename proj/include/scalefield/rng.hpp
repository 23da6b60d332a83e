#pragma once

#include <array>
#include <cstdint>

#include "scalefield/grid.hpp"

namespace scalefield {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al. counter-based generator).
PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

/// Stream families sharing one seed.
enum class StreamPurpose : std::uint32_t {
  noise = 1,
  terminal_field = 2,
  test_field = 3,
  ansatz_init = 4,
  bootstrap = 5,
};

/// 32-bit key of a mode that does not depend on the grid cutoff.
/// Valid for |n_0|, |n_1| < 1024 and |n_2| < 512.
constexpr std::uint32_t mode_key(const Mode& n) noexcept {
  return std::uint32_t(n[0] + 1024) | (std::uint32_t(n[1] + 1024) << 11) |
         (std::uint32_t(n[2] + 512) << 22);
}

/// Representative of the orbit {n, -n}: the first nonzero component is positive.
inline bool is_orbit_representative(const Mode& n) noexcept {
  for (int v : n) {
    if (v > 0) return true;
    if (v < 0) return false;
  }
  return true;  // zero mode
}

/// Addressable normal variates for one (seed, replica, purpose) triple.
///
/// Every draw is a pure function of (seed, replica, purpose, a, b), so
/// replicas and knots can be generated in any order or in parallel.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t replica, StreamPurpose purpose) noexcept;

  /// Four raw 32-bit words for slot (a, b).
  PhiloxCounter raw(std::uint32_t a, std::uint32_t b) const noexcept;
  /// Two uniforms in (0, 1] with 53-bit resolution.
  std::array<double, 2> uniform_pair(std::uint32_t a, std::uint32_t b) const noexcept;
  /// Two independent standard normals (Box-Muller).
  std::array<double, 2> normal_pair(std::uint32_t a, std::uint32_t b) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t replica() const noexcept { return replica_; }

 private:
  std::uint64_t seed_;
  std::uint64_t replica_;
  PhiloxKey key_;
  std::uint32_t c0_, c1_;
};

}  // namespace scalefield
