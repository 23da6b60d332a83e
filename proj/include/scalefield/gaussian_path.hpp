#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "scalefield/field.hpp"
#include "scalefield/rng.hpp"
#include "scalefield/schedule.hpp"
#include "scalefield/symbols.hpp"

namespace scalefield {

/// Modes that switch on during one knot interval and their interval
/// transport factor Jbar_k(n) = sqrt((rho^2_{t_{k+1}} - rho^2_{t_k}) / dt_k) / <n>.
struct IntervalBand {
  std::vector<std::uint32_t> modes;  ///< sorted indices into the full grid
  std::vector<double> j_bar;         ///< aligned with modes
  int n_max = 0;                     ///< smallest cube holding every band mode

  std::size_t size() const noexcept { return modes.size(); }
  /// Position of a full-grid index in `modes`, or size() if absent.
  std::size_t find(std::size_t grid_index) const noexcept;
};

/// Geometry shared by every replica on one (grid, schedule, symbols).
///
/// Jbar_k is the interval-averaged J: Jbar_k^2 dt_k equals the exact
/// variance that W(n) gains over [t_k, t_{k+1}], so one symbol drives the
/// free field, the drift integral and the Girsanov pairing consistently.
class PathGeometry {
 public:
  PathGeometry(const TorusGrid& grid, ScaleSchedule schedule, Symbols symbols = Symbols{});

  static std::shared_ptr<const PathGeometry> make(const TorusGrid& grid, ScaleSchedule schedule,
                                                  Symbols symbols = Symbols{});

  const TorusGrid& grid() const noexcept { return grid_; }
  const ScaleSchedule& schedule() const noexcept { return schedule_; }
  const Symbols& symbols() const noexcept { return symbols_; }
  std::size_t interval_count() const noexcept { return bands_.size(); }
  std::size_t knot_count() const noexcept { return schedule_.knot_count(); }
  double knot(std::size_t k) const { return schedule_.knot(k); }
  double dt(std::size_t k) const { return schedule_.dt(k); }

  const IntervalBand& band(std::size_t k) const { return bands_.at(k); }
  /// Jbar_k(n) for a full-grid index (0 off the band).
  double j_bar(std::size_t k, std::size_t grid_index) const;

  /// Cutoff of the smallest cube containing the support of W_{t_k}.
  int knot_cutoff(std::size_t k) const { return knot_cutoff_.at(k); }
  TorusGrid knot_grid(std::size_t k) const;
  TorusGrid band_grid(std::size_t k) const;

  /// rho_{t_k}(n)^2 / <n>^2 accumulated from the increments, per mode.
  std::vector<double> transported_variance(std::size_t k) const;

 private:
  TorusGrid grid_;
  ScaleSchedule schedule_;
  Symbols symbols_;
  std::vector<IntervalBand> bands_;
  std::vector<int> knot_cutoff_;
};

/// Per-mode complex Gaussian increments Delta B_k(n) of one replica.
///
/// Increments on each interval's active band are stored; all others are
/// drawn on demand from the same counter-based stream, so every (k, n) has
/// a single well-defined value. Delta B_k(-n) = conj Delta B_k(n),
/// Delta B_k(0) is real and E|Delta B_k(n)|^2 = dt_k.
class NoisePath {
 public:
  NoisePath(std::shared_ptr<const PathGeometry> geometry, std::uint64_t seed,
            std::uint64_t replica);

  const PathGeometry& geometry() const noexcept { return *geometry_; }
  const std::shared_ptr<const PathGeometry>& geometry_ptr() const noexcept { return geometry_; }
  std::uint64_t seed() const noexcept { return stream_.seed(); }
  std::uint64_t replica() const noexcept { return stream_.replica(); }

  /// Increments on band(k), aligned with band(k).modes.
  std::span<const Complex> band_increments(std::size_t k) const { return band_.at(k); }
  Complex increment(std::size_t k, const Mode& n) const;
  /// Delta B_k on the cube of the given cutoff.
  SpectralField increment_field(std::size_t k, int n_max) const;

  /// Overwrite Delta B_k(n) (and its conjugate partner) for perturbation studies.
  void set_increment(std::size_t k, const Mode& n, Complex value);

  friend bool operator==(const NoisePath& a, const NoisePath& b);

 private:
  Complex draw(std::size_t k, const Mode& n) const;

  std::shared_ptr<const PathGeometry> geometry_;
  CounterStream stream_;
  std::vector<std::vector<Complex>> band_;
  std::map<std::pair<std::size_t, std::uint32_t>, Complex> overrides_;
};

NoisePath sample_noise(std::shared_ptr<const PathGeometry> geometry, std::uint64_t seed,
                       std::uint64_t replica);

/// Per-knot snapshots; snapshot k lives on the cube geometry.knot_cutoff(k)
/// unless stated otherwise.
struct FieldPath {
  std::shared_ptr<const PathGeometry> geometry;
  std::vector<SpectralField> snapshots;

  std::size_t size() const noexcept { return snapshots.size(); }
  const SpectralField& operator[](std::size_t k) const { return snapshots[k]; }
  SpectralField& operator[](std::size_t k) { return snapshots[k]; }
  const SpectralField& terminal() const { return snapshots.back(); }
};

/// Drift values u_{t_k} for k = 0 .. K-1 (left endpoints of the intervals).
using DriftPath = std::vector<SpectralField>;

/// Adds scale * values[m] at band(k).modes[m] to f (modes outside f's cube skipped).
void add_band_values(SpectralField& f, const PathGeometry& geometry, std::size_t k,
                     std::span<const Complex> values, double scale = 1.0);

/// Jbar_k applied to f, returned on band_grid(k).
SpectralField apply_j_bar(const PathGeometry& geometry, std::size_t k, const SpectralField& f);

/// Free-field marcher: W_{t_k} for k = 0, 1, ... without storing the path.
class FreeFieldCursor {
 public:
  explicit FreeFieldCursor(const NoisePath& noise);
  std::size_t knot() const noexcept { return k_; }
  const SpectralField& field() const noexcept { return w_; }
  bool at_end() const noexcept { return k_ + 1 >= noise_->geometry().knot_count(); }
  /// W_{t_{k+1}} = W_{t_k} + Jbar_k Delta B_k.
  void advance();

 private:
  const NoisePath* noise_;
  std::size_t k_ = 0;
  SpectralField w_;
};

/// W_{t_k} = sum_{j < k} Jbar_j Delta B_j at every knot.
FieldPath build_W(const NoisePath& noise);

/// I_{t_{k+1}} = I_{t_k} + Jbar_k u_{t_k} dt_k, with I_0 = 0.
FieldPath integrate_drift(const DriftPath& u, std::shared_ptr<const PathGeometry> geometry);

/// sum_k Re sum_n u_k(n) conj(Delta B_k(n)) - 1/2 sum_k ||u_k||^2 dt_k.
double girsanov_log_weight(const DriftPath& u, const NoisePath& noise);
/// The stochastic-integral part sum_k Re sum_n u_k(n) conj(Delta B_k(n)).
double girsanov_pairing(const SpectralField& u_k, const NoisePath& noise, std::size_t k);

/// Exact sample of W_T (mode n ~ rho_T(n) / <n> times a unit complex normal),
/// bypassing any schedule. Real fields with the same orbit structure.
SpectralField sample_terminal_field(const TorusGrid& grid, const Symbols& symbols, double T,
                                    std::uint64_t seed, std::uint64_t replica,
                                    StreamPurpose purpose = StreamPurpose::terminal_field);

}  // namespace scalefield
