#pragma once

#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "scalefield/field.hpp"

namespace scalefield {

/// Dyadic Littlewood-Paley partition on a grid's mode cube.
///
/// chi is the smoothstep bump equal to 1 on |xi| <= 0.9 and 0 beyond 1.2,
/// phi(xi) = chi(xi / 2) - chi(xi) lives on the annulus 0.9 < |xi| < 2.4 and
/// block j >= 0 is phi(2^-j xi); block -1 is chi. The weights are divided
/// by their sum at each mode, so they add up to one to rounding.
class BlockPartition {
 public:
  explicit BlockPartition(const TorusGrid& grid);

  /// Shared partition for the grid's mode cube.
  static std::shared_ptr<const BlockPartition> of(const TorusGrid& grid);

  const TorusGrid& grid() const noexcept { return grid_; }
  int j_max() const noexcept { return j_max_; }
  int block_count() const noexcept { return j_max_ + 2; }

  /// Block weights phi_j at each mode, j in [-1, j_max].
  std::span<const double> block(int j) const;
  double weight(int j, std::size_t mode_index) const { return block(j)[mode_index]; }
  /// Weights of S_j = sum_{i <= j} Delta_i; empty range for j < -1.
  std::vector<double> low_pass(int j) const;

  /// max over modes of |sum_j phi_j - 1|.
  double partition_residual() const;

  static double chi(double radius) noexcept;
  static double phi(double radius) noexcept;
  /// Smallest j >= -1 whose low-pass chi(2^-(j+1) xi) is identically one on
  /// |xi| <= max_radius.
  static int j_max_for(double max_radius) noexcept;

 private:
  TorusGrid grid_;
  int j_max_ = -1;
  std::vector<double> weights_;  // (j + 1) * mode_count + i
};

/// Delta_j f.
SpectralField lp_block(int j, const SpectralField& f);
/// S_j f = sum_{i <= j} Delta_i f.
SpectralField lp_low_pass(int j, const SpectralField& f);

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// L^p norm on the grid's physical nodes with normalized measure.
double lp_norm(const SpectralField& f, double p);

/// || (2^{js} ||Delta_j f||_{L^p})_j ||_{l^q}
double besov_norm(const SpectralField& f, double s, double p, double q);

/// || <D>^s f ||_{L^p}
double sobolev_norm(const SpectralField& f, double s, double p);

enum class ParaproductMode { less, greater, resonant };

/// Bony decomposition pieces of f g:
///   greater:  sum over j < i - 1 of Delta_i f Delta_j g  (f at high frequency)
///   less:     sum over j > i + 1
///   resonant: sum over |i - j| <= 1
/// Products are dealiased and truncated to f's grid.
SpectralField paraproduct(const SpectralField& f, const SpectralField& g, ParaproductMode mode);

/// Same, for inputs on possibly different cubes, truncated to |n_i| <= out_n_max.
SpectralField paraproduct(const SpectralField& f, const SpectralField& g, ParaproductMode mode,
                          int out_n_max);

/// Adjoint in g of g -> (f > g) truncated to h's cube:
/// sum_i S_{i-2}(Delta_i f h), returned on the cube of cutoff g_n_max.
SpectralField paraproduct_greater_adjoint(const SpectralField& f, const SpectralField& h,
                                          int g_n_max);

/// (f > g) o h - g (f o h), all on f's grid.
SpectralField commutator(const SpectralField& f, const SpectralField& g, const SpectralField& h);

}  // namespace scalefield
