#pragma once

#include <vector>

#include "scalefield/field.hpp"
#include "scalefield/grid.hpp"

namespace scalefield {

/// Quintic smoothstep q(s) = 10 s^3 - 15 s^4 + 6 s^5 clamped to [0, 1].
double smoothstep(double s) noexcept;
double smoothstep_derivative(double s) noexcept;

struct SymbolParams {
  double rho_plateau = 0.9;
  double rho_support = 1.0;
  double theta_inner = 0.5;
  double theta_outer = 2.0 / 3.0;
  double eta_inner = 1.0;
  double eta_outer = 2.0;
  double zeta_lo = 2.0;
  double zeta_hi = 3.0;
  double T0 = 3.0;
};

/// Closed-form scale multipliers.
///
/// rho_t(n) = rho(<n>/t) is the smooth cutoff, sigma_t^2 = d/dt rho_t^2 its
/// rate, theta_t the low-pass used for the flat part of the drift integral.
class Symbols {
 public:
  explicit Symbols(SymbolParams params = {}) : p_(params) {}

  const SymbolParams& params() const noexcept { return p_; }

  /// Radial profile rho(r).
  double profile(double r) const noexcept;
  double profile_derivative(double r) const noexcept;

  /// rho(<n>/t) from the bracket value <n>.
  double rho(double t, double bracket_n) const noexcept;
  /// d/dt rho(<n>/t)^2, evaluated exactly.
  double sigma_sq(double t, double bracket_n) const noexcept;
  /// sigma_t / <n>, the symbol of J_t.
  double j_symbol(double t, double bracket_n) const noexcept;

  double theta_tilde(double t, double radius_n) const noexcept;
  double eta(double radius_n) const noexcept;
  double zeta(double t) const noexcept;
  /// theta_t(xi) = (1 - eta) theta~_t + zeta(t) eta theta~_t, from |xi|.
  double theta(double t, double radius_n) const noexcept;

  // Mode-level entry points. Throw std::domain_error for t <= 0.
  double eval_rho(double t, const Mode& n) const;
  double eval_sigma_sq(double t, const Mode& n) const;
  double eval_theta(double t, const Mode& n) const;
  double eval_j(double t, const Mode& n) const;

 private:
  SymbolParams p_;
};

/// Per-mode symbol table aligned with a grid's mode ordering.
template <class Fn>
std::vector<double> tabulate(const TorusGrid& grid, Fn&& symbol) {
  std::vector<double> out(grid.mode_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = symbol(grid.mode(i));
  return out;
}

/// Pointwise multiplication of coefficients by a tabulated real symbol.
SpectralField apply_multiplier(std::span<const double> symbol, const SpectralField& f);

/// Pointwise multiplication by symbol(n), a real or complex function of the mode.
template <class Fn>
SpectralField apply_multiplier(Fn&& symbol, const SpectralField& f) {
  SpectralField out(f.grid());
  const TorusGrid& g = f.grid();
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] * symbol(g.mode(i));
  return out;
}

/// The J_t operator: multiplier sigma_t(n) / <n>.
SpectralField apply_j(const Symbols& symbols, double t, const SpectralField& f);
/// The theta_t(D) low-pass.
SpectralField apply_theta(const Symbols& symbols, double t, const SpectralField& f);
/// <D>^s.
SpectralField apply_bracket_power(double s, const SpectralField& f);

}  // namespace scalefield
