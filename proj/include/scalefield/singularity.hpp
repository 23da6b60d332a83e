#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "scalefield/drift.hpp"
#include "scalefield/wick.hpp"

namespace scalefield {

/// int [[(theta_T f)^4]] with the variance c_{theta_T} of theta_T W_oo.
double quartic_wick_integral(const SpectralField& f, double T, const WickContext& ctx);
/// Same with an explicit Wick variance c.
double quartic_wick_integral(const SpectralField& f, double T, double c, const Symbols& symbols);

/// Exact E[(int [[(theta_T W_oo)^4]])^2] = 24 int C^4 on the grid's modes,
/// C the covariance of theta_T W_oo.
double free_quartic_second_moment(const TorusGrid& grid, const Symbols& symbols, double T);

/// quartic_wick_integral / T^{(1+delta)/2}. Throws unless 0 < delta < 1/2.
double s_statistic(const SpectralField& f, double T, double delta, const WickContext& ctx);
/// quartic_wick_integral / T^{1-delta}. Throws unless 0 < delta < 1/2.
double divergence_statistic(const SpectralField& f, double T, double delta, const WickContext& ctx);

/// Scale after which J_t no longer reaches supp theta_T:
/// <n>_max / rho_plateau with <n>_max = sqrt(1 + (theta_outer T)^2).
/// theta_T W_t = theta_T W_T for every t beyond it.
double theta_horizon(double T, const Symbols& symbols);

/// Knot quadrature of
///   int_0^T int (theta_T J_t W^{theta_T,3}_t) (J_t W3(W_t)) dt,
/// W^{theta_T,3}_t = 4 [[(theta_T W_t)^3]] with variance c_{theta_T,t}.
/// Knots beyond theta_horizon(T) contribute nothing and are skipped; the
/// path must reach min(T, horizon) (std::invalid_argument otherwise).
double cross_term(const FieldPath& W, double T, const WickContext& ctx);
double cross_term(const DriftRun& run, double T, const WickContext& ctx);
/// Same on the free path of `noise`, built knot by knot.
double cross_term(const NoisePath& noise, double T, const WickContext& ctx);

struct ItoCheck {
  double wick_side = 0.0;      ///< int [[(theta_T W)^4]]
  double integral_side = 0.0;  ///< sum_k int W^{theta_T,3}_{t_k} theta_T dW_k
  double residual = 0.0;       ///< |difference|
};

/// Discrete Ito representation of the quartic Wick integral on the free
/// path of `noise`; the schedule must reach min(T, theta_horizon(T)).
ItoCheck ito_representation_check(const NoisePath& noise, double T, const WickContext& ctx);

struct SlopeFit {
  double slope = 0.0, intercept = 0.0;
  double std_error = 0.0;      ///< of the slope
  double ci_low = 0.0, ci_high = 0.0;  ///< 95%
  std::size_t points = 0;
};

/// Weighted least squares of log y on log x, weights 1/var(log y) from the
/// delta method se(y)/y. Needs >= 3 points with y > 0 and se > 0.
SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<double>& se);

struct TrendTest {
  double statistic = 0.0;  ///< Jonckheere-Terpstra J for decreasing order
  double z = 0.0;
  double p_value = 1.0;    ///< one-sided, normal approximation with tie correction
};

/// Jonckheere-Terpstra test of H1: groups decrease in location along the
/// given order.
TrendTest jonckheere_decreasing(const std::vector<std::vector<double>>& groups);

struct ScanPoint {
  double T = 0.0;
  std::size_t replicas = 0, aborted = 0;
  double mean = 0.0, mean_se = 0.0;                 ///< of the statistic
  double second_moment = 0.0, second_moment_se = 0.0;
  std::vector<double> samples;
};

struct ScanResult {
  std::vector<ScanPoint> points;
  SlopeFit fit;  ///< see the individual scans for what is fitted
};

/// Per-replica value through the point summary.
ScanPoint summarize_scan_point(double T, std::vector<double> samples, std::size_t aborted = 0);

/// Free field: samples of int [[(theta_T W_T)^4]] with W_T drawn exactly;
/// fit of log E[Q^2] on log T over the points with E[Q^2] > 0.
ScanResult quartic_moment_scan(const TorusGrid& grid, const std::vector<double>& Ts,
                               std::size_t replicas, std::uint64_t seed, int workers = 1);

/// Free field: samples of cross_term on schedules truncated at the horizon;
/// fit of log E[cross] on log T.
ScanResult cross_term_scan(const TorusGrid& grid, const std::vector<double>& Ts, double resolution,
                           std::size_t replicas, std::uint64_t seed, int workers = 1);

/// Drift measure: divergence_statistic of W_T = Wtilde_T + I_T(u) from
/// solve_under_Q (marched to the horizon); aborted replicas are counted.
ScanResult divergence_scan(const TorusGrid& grid, const std::vector<double>& Ts, double resolution,
                           const DriftParams& params, double delta, std::size_t replicas,
                           std::uint64_t seed, int workers = 1);

}  // namespace scalefield
