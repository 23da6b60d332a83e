#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "scalefield/gaussian_path.hpp"
#include "scalefield/wick.hpp"

namespace scalefield {

struct DriftParams {
  double lambda = 0.0;
  double T_bar = 2.0;  ///< paraproduct term active for t_k >= T_bar
  int n_aux = 5;       ///< odd exponent of the smoothed auxiliary term
  bool aux = true;     ///< include -J <D>^{-1/2} [[(<D>^{-1/2} H)^n]]
  double N_stop = std::numeric_limits<double>::infinity();
  double gamma = 0.0;  ///< second-order counterterm knob
  int picard_iterations = 0;

  /// Throws std::invalid_argument on violated preconditions.
  void validate() const;
};

/// Per-knot Wick constants and the shared geometry of a drift computation.
class DriftContext {
 public:
  explicit DriftContext(std::shared_ptr<const PathGeometry> geometry);

  const PathGeometry& geometry() const noexcept { return *geometry_; }
  const std::shared_ptr<const PathGeometry>& geometry_ptr() const noexcept { return geometry_; }
  const WickContext& wick() const noexcept { return wick_; }

  /// c_{t_k} and c~_{t_k}
  double c(std::size_t k) const { return c_.at(k); }
  double c_tilde(std::size_t k) const { return c_tilde_.at(k); }

  /// f^flat at knot k: theta_{t_k}(D) f.
  SpectralField flat(std::size_t k, const SpectralField& f) const;

 private:
  std::shared_ptr<const PathGeometry> geometry_;
  WickContext wick_;
  std::vector<double> c_, c_tilde_;
};

/// One knot of the drift functional,
///   u_k = -lambda Jbar_k W3(H) - lambda [t_k >= T_bar] Jbar_k (W2(H) > Iflat)
///         - Jbar_k <D>^{-1/2} [[(<D>^{-1/2} H)^n]],
/// with Wick constants of the free field at t_k. Returned on band_grid(k).
SpectralField xi_step(std::size_t k, const SpectralField& H, const SpectralField& Iu_flat,
                      const DriftParams& params, const DriftContext& ctx);

/// The same functional at H = W - I, assembled from the binomially expanded
/// Wick polynomials in W and I (independent of the direct Hermite route).
SpectralField xi_step_expanded(std::size_t k, const SpectralField& W, const SpectralField& Iu,
                               const SpectralField& Iu_flat, const DriftParams& params,
                               const DriftContext& ctx);

enum class DriftMode { under_P, under_Q };

const char* to_string(DriftMode mode) noexcept;

struct DriftOptions {
  bool record_paths = true;
  /// Stop marching at the first knot >= horizon; the free field still runs to T.
  double horizon = std::numeric_limits<double>::infinity();
};

/// Joint record of one replica.
struct DriftRun {
  DriftMode mode = DriftMode::under_P;
  std::shared_ptr<const PathGeometry> geometry;
  DriftParams params;

  FieldPath W;       ///< the drift-measure sample (under_P: the free field itself)
  FieldPath Wtilde;  ///< under_Q: the free field driving the run
  DriftPath u;       ///< u_{t_k} on band_grid(k), k < K
  FieldPath Iu;      ///< I_{t_k}(u)
  SpectralField W_T, Wtilde_T, Iu_T;

  std::vector<double> energy;  ///< int_0^{t_k} ||u||^2, k = 0 .. marched knots
  std::size_t stop_index = 0;  ///< first knot with energy >= N_stop, or K
  std::size_t knots_marched = 0;
  double pairing = 0.0;        ///< sum_k <u_k, dX_k>
  double log_weight = 0.0;     ///< pairing - energy / 2
  double logD = std::numeric_limits<double>::quiet_NaN();

  bool recorded = false;
  bool complete = false;  ///< marched to T without abort
  bool aborted = false;
  std::size_t abort_knot = 0;
  std::string diagnostic;

  double total_energy() const { return energy.empty() ? 0.0 : energy.back(); }
};

/// u = Xi(W - I(u), u) by explicit marching on the free path of `noise`.
DriftRun solve_under_P(const NoisePath& noise, const DriftParams& params, const DriftContext& ctx,
                       const DriftOptions& options = {});

/// u = Xi(Wtilde, u) with Wtilde the free path of `noise`; W = Wtilde + I(u).
DriftRun solve_under_Q(const NoisePath& noise, const DriftParams& params, const DriftContext& ctx,
                       const DriftOptions& options = {});

/// -V_T(W_T) - int u dX + 1/2 int ||u||^2; stores the value in run.logD.
/// Throws std::logic_error for aborted or horizon-truncated runs.
double log_density_DT(DriftRun& run, double a, double b);

struct RemainderReport {
  DriftPath u_w;           ///< U(Wtilde + I(w))
  DriftPath r_w;           ///< the remainder, by its explicit formula
  double residual = 0.0;   ///< max_k || u^w + 4 lambda J[[W~^3]] + 12 lambda J([[W~^2]] > I^flat(h^w)) - r^w ||
  double l_residual = 0.0; ///< max_k || l_k(h^w) - (r^w_k + w_k) ||
  double scale = 0.0;      ///< max_k ||u^w_k||, for relative reading
};

/// Shift decomposition of the drift around the free path of a recorded
/// under_Q run. No stopping is applied to u^w.
RemainderReport remainder_decomposition(const DriftRun& run, const DriftPath& w,
                                        const DriftContext& ctx);

}  // namespace scalefield
