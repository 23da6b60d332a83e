#pragma once

#include <vector>

#include "scalefield/field.hpp"
#include "scalefield/symbols.hpp"

namespace scalefield {

/// Pointwise variances of the truncated free field, summed over the grid's
/// retained modes.
class WickContext {
 public:
  explicit WickContext(const TorusGrid& grid, Symbols symbols = Symbols{});

  const TorusGrid& grid() const noexcept { return grid_; }
  const Symbols& symbols() const noexcept { return symbols_; }

  /// c_t = sum_n rho_t(n)^2 / <n>^2
  double c(double t) const;
  /// c~_t = sum_n rho_t(n)^2 / <n>^3, the variance of <D>^{-1/2} W_t(x)
  double c_tilde(double t) const;
  /// c_{theta_T} = sum_n theta_T(n)^2 / <n>^2, the variance of theta_T W_oo(x)
  double c_theta(double T) const;
  /// c_{theta_T,t} = sum_n theta_T(n)^2 rho_t(n)^2 / <n>^2
  double c_theta_t(double T, double t) const;

 private:
  template <class Fn>
  double sum_shells(Fn&& term) const;

  TorusGrid grid_;
  Symbols symbols_;
  std::vector<long> shells_;         // distinct |n|^2
  std::vector<double> multiplicity_;  // modes per shell
};

/// c^{m/2} He_m(x / sqrt c): x, x^2 - c, x^3 - 3 c x, x^4 - 6 c x^2 + 3 c^2, ...
/// Reduces to x^m for c = 0.
double wick_polynomial(int m, double x, double c) noexcept;

/// [[f^m]]_c evaluated pointwise and truncated to out_n_max (default: f's cutoff).
/// Throws std::invalid_argument unless 1 <= m <= 4 and c >= 0.
SpectralField wick_power(const SpectralField& f, int m, double c, int out_n_max = -1);

/// 12 [[f^2]]_c
SpectralField bold_W2(const SpectralField& f, double c, int out_n_max = -1);
/// 4 [[f^3]]_c
SpectralField bold_W3(const SpectralField& f, double c, int out_n_max = -1);

/// [[g^m]] with variance c~_t, g = <D>^{-1/2} f. Odd m only unless allow_even.
SpectralField smoothed_wick(const SpectralField& f, int m, double t, const WickContext& ctx,
                            int out_n_max = -1, bool allow_even = false);

/// lambda * ( int f^4 - a int f^2 + b ) with |Lambda| = 1.
double potential_V(const SpectralField& f, double lambda, double a, double b);

struct Counterterms {
  double a = 0.0;
  double b = 0.0;
};

/// a_T = 6 c_T + lambda gamma, b_T = 3 c_T^2.
Counterterms default_counterterms(double T, double lambda, const WickContext& ctx,
                                  double gamma = 0.0);

}  // namespace scalefield
