#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scalefield/drift.hpp"

namespace scalefield {

enum class AnsatzKind { raw, renormalized };
enum class Functional { quartic, quadratic };

const char* to_string(AnsatzKind kind) noexcept;

/// Terminal functional F of the variational problem.
///   quartic:   F(phi) = lambda (int phi^4 - a int phi^2 + b)
///   quadratic: F(phi) = m^2/2 ||phi||^2
/// An optional linear probe adds <phi, probe> to either.
struct BdParams {
  Functional functional = Functional::quartic;
  double lambda = 0.0;
  double a = 0.0;
  double b = 0.0;
  double mass = 1.0;
  std::optional<SpectralField> probe;

  void validate() const;
};

double functional_value(const SpectralField& phi, const BdParams& params);
/// Fourier coefficients of the L^2 gradient dF/dphi, on phi's cube.
SpectralField functional_gradient(const SpectralField& phi, const BdParams& params);

/// Adapted drift parametrized per (knot, band orbit). Each orbit carries an
/// open-loop value (re, im) and a feedback gain g on the current sample
/// Y_k = W_k + I_k(u):
///   l_k(n) = re + i im + g Y_k(n),  l_k(-n) = conj l_k(n).
/// raw:          u_k = l_k
/// renormalized: u_k = -lambda Jbar_k W3(W_k) - lambda Jbar_k (W2(W_k) > I_k^flat(u)) + l_k
class DriftAnsatz {
 public:
  static constexpr std::size_t kSlots = 3;  // re, im, gain
  enum Slot : std::size_t { open_re = 0, open_im = 1, gain = 2 };

  DriftAnsatz(std::shared_ptr<const PathGeometry> geometry, AnsatzKind kind);

  AnsatzKind kind() const noexcept { return kind_; }
  const PathGeometry& geometry() const noexcept { return *geometry_; }
  const std::shared_ptr<const PathGeometry>& geometry_ptr() const noexcept { return geometry_; }

  std::size_t size() const noexcept { return coefficients.size(); }
  std::size_t orbit_total() const noexcept { return size() / kSlots; }
  std::size_t orbit_count(std::size_t k) const { return orbits_.at(k).size(); }
  /// Full-grid index of orbit j's representative at knot k.
  std::uint32_t orbit_mode(std::size_t k, std::size_t j) const { return orbits_.at(k).at(j); }
  std::size_t index(std::size_t k, std::size_t j, Slot s) const {
    return (offset_.at(k) + j) * kSlots + s;
  }
  /// False for slots that cannot influence the drift (imaginary part at n = 0).
  bool is_active(std::size_t i) const;

  std::vector<double> coefficients;

 private:
  std::shared_ptr<const PathGeometry> geometry_;
  AnsatzKind kind_;
  std::vector<std::vector<std::uint32_t>> orbits_;
  std::vector<std::size_t> offset_;
};

struct PathObjective {
  double value = 0.0;     ///< F(W_T + I_T(u)) + 1/2 sum_k ||u_k||^2 dt_k
  double terminal = 0.0;  ///< F part
  double energy = 0.0;    ///< sum_k ||u_k||^2 dt_k
};

/// One path; when grad is given it receives d value / d coefficients (same
/// layout as the ansatz), by reverse-mode differentiation of the forward march.
PathObjective path_objective(const DriftAnsatz& ansatz, const NoisePath& noise,
                             const BdParams& params, const DriftContext& ctx,
                             std::vector<double>* grad = nullptr);

/// The drift u_k of one path (band_grid(k) fields) for inspection.
DriftPath ansatz_drift(const DriftAnsatz& ansatz, const NoisePath& noise, const BdParams& params,
                       const DriftContext& ctx);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::vector<double> samples;  ///< per path (empty for direct estimates)
};

/// Batch mean of the path objective with its standard error.
Estimate bd_objective(const DriftAnsatz& ansatz, std::span<const NoisePath> batch,
                      const BdParams& params, const DriftContext& ctx, int workers = 1);

/// Batch mean of the pathwise gradient; summed in batch order.
std::vector<double> gradient(const DriftAnsatz& ansatz, std::span<const NoisePath> batch,
                             const BdParams& params, const DriftContext& ctx, int workers = 1);

/// Both of the above in one forward/backward sweep per path.
Estimate objective_and_gradient(const DriftAnsatz& ansatz, std::span<const NoisePath> batch,
                                const BdParams& params, const DriftContext& ctx, int workers,
                                std::vector<double>& grad);

struct GradientCheck {
  std::vector<std::size_t> coordinates;
  std::vector<double> analytic, finite_difference;
  double max_relative_error = 0.0;
};

/// Central differences with step h on `count` random active coordinates. The
/// relative error uses max(|analytic|, |fd|, 1e-6 max_i |grad_i|) as denominator.
GradientCheck check_gradient(const DriftAnsatz& ansatz, std::span<const NoisePath> batch,
                             const BdParams& params, const DriftContext& ctx, std::size_t count,
                             std::uint64_t seed, double h = 1e-4);

/// -log of the sample mean of exp(-F(W_T)) with W_T sampled exactly per mode,
/// evaluated by log-sum-exp; std_error by the delta method.
/// Throws std::invalid_argument for replicas < 100 and std::runtime_error
/// when no weight is finite.
Estimate direct_log_partition(const TorusGrid& grid, const Symbols& symbols, double T,
                              const BdParams& params, std::size_t replicas, std::uint64_t seed,
                              int workers = 1);

/// 1/2 sum_n log(1 + m^2 rho_T(n)^2 / <n>^2)
double quadratic_closed_form(const TorusGrid& grid, const Symbols& symbols, double T, double mass);

std::vector<NoisePath> make_batch(std::shared_ptr<const PathGeometry> geometry, std::uint64_t seed,
                                  std::uint64_t first_replica, std::size_t count);

struct OptConfig {
  AnsatzKind kind = AnsatzKind::raw;
  int epochs = 200;
  std::size_t batch = 64;
  int refresh = 0;          ///< epochs per common-random-number batch; 0 keeps one batch
  double step = 1.0;        ///< preconditioned step
  int patience = 5;         ///< epochs without improvement before halving
  double min_step = 1e-6;
  std::size_t eval_batch = 256;
  std::size_t direct_replicas = 10000;
  std::size_t gradcheck_coordinates = 20;
  std::uint64_t seed = 1;
  int workers = 1;
  double divergence = 1e12;
};

struct OptReport {
  std::vector<double> trace;  ///< training objective per epoch
  std::vector<double> steps;  ///< step size used per epoch
  double final_value = 0.0, final_std_error = 0.0;  ///< fresh evaluation batch
  double direct_value = 0.0, direct_std_error = 0.0;
  GradientCheck gradient_check;
  double crn_difference_variance = 0.0;    ///< var of per-path differences, shared noise
  double independent_difference_variance = 0.0;
  int halvings = 0;
  bool aborted = false;
  std::string diagnostic;
  std::vector<double> coefficients;
};

/// Preconditioned gradient descent on common-random-number batches.
OptReport optimize(std::shared_ptr<const PathGeometry> geometry, const BdParams& params,
                   const OptConfig& config);

}  // namespace scalefield
