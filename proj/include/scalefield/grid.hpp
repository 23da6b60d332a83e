#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

namespace scalefield {

/// Integer lattice point; the third component is unused (zero) for dim = 2.
using Mode = std::array<int, 3>;

inline double squared_norm(const Mode& n) noexcept {
  return double(n[0]) * n[0] + double(n[1]) * n[1] + double(n[2]) * n[2];
}

/// Euclidean length |n|.
inline double radius(const Mode& n) noexcept { return std::sqrt(squared_norm(n)); }

/// Japanese bracket sqrt(1 + |n|^2).
inline double bracket(const Mode& n) noexcept { return std::sqrt(1.0 + squared_norm(n)); }

inline Mode negate(const Mode& n) noexcept { return {-n[0], -n[1], -n[2]}; }

/// Discretization of the periodic box (R / 2 pi Z)^dim.
///
/// Retained modes form the cube |n_i| <= n_max, stored row-major with the
/// last axis fastest. Because the cube is symmetric the index of -n is
/// mode_count() - 1 - index(n). Physical nodes are x_j = 2 pi j / M.
class TorusGrid {
 public:
  TorusGrid() = default;
  TorusGrid(int dim, int modes_per_axis, int n_max, int padding_factor = 4);

  /// Grid with the smallest FFT-friendly M >= 2 n_max + 1.
  static TorusGrid with_modes(int n_max, int dim = 3, int padding_factor = 4);

  int dim() const noexcept { return dim_; }
  int modes_per_axis() const noexcept { return modes_per_axis_; }
  int n_max() const noexcept { return n_max_; }
  int padding_factor() const noexcept { return padding_factor_; }
  int side() const noexcept { return 2 * n_max_ + 1; }

  std::size_t mode_count() const noexcept { return mode_count_; }
  std::size_t physical_size() const noexcept;

  std::size_t index(const Mode& n) const noexcept {
    const std::size_t s = std::size_t(side());
    std::size_t i = std::size_t(n[0] + n_max_) * s + std::size_t(n[1] + n_max_);
    if (dim_ == 3) i = i * s + std::size_t(n[2] + n_max_);
    return i;
  }
  std::size_t negated_index(std::size_t i) const noexcept { return mode_count_ - 1 - i; }
  std::size_t zero_index() const noexcept { return (mode_count_ - 1) / 2; }
  Mode mode(std::size_t i) const noexcept;
  bool contains(const Mode& n) const noexcept;

  /// Same M and padding, smaller (or equal) mode cube.
  TorusGrid with_cutoff(int n_max) const;

  /// Two grids index the same mode set.
  bool same_modes(const TorusGrid& other) const noexcept {
    return dim_ == other.dim_ && n_max_ == other.n_max_;
  }

  std::string describe() const;

  friend bool operator==(const TorusGrid&, const TorusGrid&) = default;

 private:
  int dim_ = 3;
  int modes_per_axis_ = 1;
  int n_max_ = 0;
  int padding_factor_ = 4;
  std::size_t mode_count_ = 1;
};

/// Smallest integer >= n whose only prime factors are 2, 3, 5 and 7.
int fft_friendly_size(int n);

}  // namespace scalefield
