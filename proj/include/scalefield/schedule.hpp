#pragma once

#include <cstddef>
#include <vector>

#include "scalefield/grid.hpp"
#include "scalefield/symbols.hpp"

namespace scalefield {

/// Increasing scale knots 0 = t_0 < t_1 < ... < t_K = T.
class ScaleSchedule {
 public:
  ScaleSchedule() = default;
  /// Throws std::invalid_argument unless knots start at 0 and increase strictly.
  explicit ScaleSchedule(std::vector<double> knots, double resolution = 0.0);

  const std::vector<double>& knots() const noexcept { return knots_; }
  double knot(std::size_t k) const { return knots_.at(k); }
  double T() const noexcept { return knots_.back(); }
  std::size_t knot_count() const noexcept { return knots_.size(); }
  std::size_t interval_count() const noexcept { return knots_.size() - 1; }
  double dt(std::size_t k) const { return knots_.at(k + 1) - knots_.at(k); }
  double resolution() const noexcept { return resolution_; }

  /// Knots in the half-open window [lo, hi).
  std::size_t count_in(double lo, double hi) const noexcept;

  /// Restriction to knots <= horizon, with horizon appended if it is not a knot.
  ScaleSchedule truncated(double horizon) const;

 private:
  std::vector<double> knots_{0.0};
  double resolution_ = 0.0;
};

/// Knots per activation band for a resolution: ceil(10 * resolution).
int steps_per_band(double resolution);

/// Schedule on [0, T] with at least steps_per_band(resolution) knots in the
/// activation band [<n>, <n> / rho_plateau) of every mode of `grid` that
/// turns on before T.
///
/// The base lattice is geometric and anchored at T, t_j = T q^{-j/S} with
/// q = rho_support / rho_plateau, so every full band holds exactly S knots.
/// Bands cut off by T get S extra geometric knots between <n> and T.
ScaleSchedule make_schedule(const TorusGrid& grid, double T, double resolution,
                            const SymbolParams& params = {});

}  // namespace scalefield
