#include "scalefield/gaussian_path.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "scalefield/transform.hpp"

namespace scalefield {

namespace {

bool is_zero_mode(const Mode& n) { return n[0] == 0 && n[1] == 0 && n[2] == 0; }

// Unit-rate complex normal scaled to E|z|^2 = var, Hermitian over the orbit.
Complex orbit_normal(const CounterStream& stream, std::uint32_t slot, const Mode& n, double var) {
  const bool rep = is_orbit_representative(n);
  const auto [z0, z1] = stream.normal_pair(slot, mode_key(rep ? n : negate(n)));
  if (is_zero_mode(n)) return {std::sqrt(var) * z0, 0.0};
  const double s = std::sqrt(0.5 * var);
  const Complex v(s * z0, s * z1);
  return rep ? v : std::conj(v);
}

int cutoff_below(double radius_bound, int cap) {
  // largest m with 1 + m^2 < radius_bound^2, or 0 if none
  if (radius_bound <= 1.0) return 0;
  int m = int(std::floor(std::sqrt(std::max(0.0, radius_bound * radius_bound - 1.0))));
  while (m > 0 && 1.0 + double(m) * m >= radius_bound * radius_bound) --m;
  return std::min(m, cap);
}

}  // namespace

std::size_t IntervalBand::find(std::size_t grid_index) const noexcept {
  const auto it = std::lower_bound(modes.begin(), modes.end(), std::uint32_t(grid_index));
  if (it == modes.end() || *it != grid_index) return modes.size();
  return std::size_t(it - modes.begin());
}

PathGeometry::PathGeometry(const TorusGrid& grid, ScaleSchedule schedule, Symbols symbols)
    : grid_(grid), schedule_(std::move(schedule)), symbols_(symbols) {
  const std::size_t count = grid.mode_count();
  std::vector<std::uint32_t> order(count);
  std::vector<double> br(count);
  for (std::size_t i = 0; i < count; ++i) br[i] = bracket(grid.mode(i));
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return br[a] < br[b]; });

  const double plateau = symbols.params().rho_plateau;
  const double support = symbols.params().rho_support;
  const std::size_t intervals = schedule_.interval_count();
  bands_.resize(intervals);
  for (std::size_t k = 0; k < intervals; ++k) {
    const double t0 = schedule_.knot(k), t1 = schedule_.knot(k + 1);
    const double dt = t1 - t0;
    // rho^2_t(n) changes only for plateau * t < <n> < support * t
    const double lo = plateau * t0, hi = support * t1;
    auto first = std::lower_bound(order.begin(), order.end(), lo,
                                  [&](std::uint32_t i, double v) { return br[i] <= v; });
    IntervalBand& band = bands_[k];
    for (auto it = first; it != order.end() && br[*it] < hi; ++it) {
      const double r0 = t0 > 0.0 ? symbols.rho(t0, br[*it]) : 0.0;
      const double r1 = symbols.rho(t1, br[*it]);
      const double gain = r1 * r1 - r0 * r0;
      if (gain > 0.0) band.modes.push_back(*it);
    }
    std::sort(band.modes.begin(), band.modes.end());
    band.j_bar.resize(band.modes.size());
    for (std::size_t m = 0; m < band.modes.size(); ++m) {
      const Mode n = grid.mode(band.modes[m]);
      const double b = br[band.modes[m]];
      const double r0 = t0 > 0.0 ? symbols.rho(t0, b) : 0.0;
      const double r1 = symbols.rho(t1, b);
      band.j_bar[m] = std::sqrt((r1 * r1 - r0 * r0) / dt) / b;
      band.n_max = std::max({band.n_max, std::abs(n[0]), std::abs(n[1]), std::abs(n[2])});
    }
  }
  knot_cutoff_.resize(schedule_.knot_count());
  for (std::size_t k = 0; k < knot_cutoff_.size(); ++k)
    knot_cutoff_[k] = cutoff_below(support * schedule_.knot(k), grid.n_max());
}

std::shared_ptr<const PathGeometry> PathGeometry::make(const TorusGrid& grid,
                                                       ScaleSchedule schedule, Symbols symbols) {
  return std::make_shared<const PathGeometry>(grid, std::move(schedule), symbols);
}

double PathGeometry::j_bar(std::size_t k, std::size_t grid_index) const {
  const IntervalBand& b = band(k);
  const std::size_t m = b.find(grid_index);
  return m < b.size() ? b.j_bar[m] : 0.0;
}

TorusGrid PathGeometry::knot_grid(std::size_t k) const {
  return grid_.with_cutoff(knot_cutoff(k));
}

TorusGrid PathGeometry::band_grid(std::size_t k) const { return grid_.with_cutoff(band(k).n_max); }

std::vector<double> PathGeometry::transported_variance(std::size_t k) const {
  std::vector<double> var(grid_.mode_count(), 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const IntervalBand& b = band(j);
    for (std::size_t m = 0; m < b.size(); ++m) var[b.modes[m]] += b.j_bar[m] * b.j_bar[m] * dt(j);
  }
  return var;
}

NoisePath::NoisePath(std::shared_ptr<const PathGeometry> geometry, std::uint64_t seed,
                     std::uint64_t replica)
    : geometry_(std::move(geometry)), stream_(seed, replica, StreamPurpose::noise) {
  if (!geometry_) throw std::invalid_argument("NoisePath: null geometry");
  const PathGeometry& g = *geometry_;
  band_.resize(g.interval_count());
  for (std::size_t k = 0; k < band_.size(); ++k) {
    const IntervalBand& b = g.band(k);
    band_[k].resize(b.size());
    for (std::size_t m = 0; m < b.size(); ++m) band_[k][m] = draw(k, g.grid().mode(b.modes[m]));
  }
}

Complex NoisePath::draw(std::size_t k, const Mode& n) const {
  return orbit_normal(stream_, std::uint32_t(k), n, geometry_->dt(k));
}

Complex NoisePath::increment(std::size_t k, const Mode& n) const {
  if (!overrides_.empty()) {
    const bool rep = is_orbit_representative(n);
    const auto it = overrides_.find({k, mode_key(rep ? n : negate(n))});
    if (it != overrides_.end()) return rep ? it->second : std::conj(it->second);
  }
  const TorusGrid& grid = geometry_->grid();
  if (grid.contains(n)) {
    const IntervalBand& b = geometry_->band(k);
    const std::size_t m = b.find(grid.index(n));
    if (m < b.size()) return band_[k][m];
  }
  return draw(k, n);
}

SpectralField NoisePath::increment_field(std::size_t k, int n_max) const {
  SpectralField out(grid_with_cutoff(geometry_->grid(), n_max));
  const TorusGrid& g = out.grid();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = increment(k, g.mode(i));
  return out;
}

void NoisePath::set_increment(std::size_t k, const Mode& n, Complex value) {
  if (k >= band_.size()) throw std::out_of_range("NoisePath::set_increment: interval out of range");
  if (is_zero_mode(n)) value = value.real();
  const bool rep = is_orbit_representative(n);
  const Complex rep_value = rep ? value : std::conj(value);
  const Mode r = rep ? n : negate(n);
  overrides_[{k, mode_key(r)}] = rep_value;
  const TorusGrid& grid = geometry_->grid();
  if (!grid.contains(r)) return;
  const IntervalBand& b = geometry_->band(k);
  const std::size_t m = b.find(grid.index(r));
  if (m == b.size()) return;
  band_[k][m] = rep_value;
  band_[k][b.find(grid.negated_index(grid.index(r)))] = std::conj(rep_value);
}

bool operator==(const NoisePath& a, const NoisePath& b) {
  return a.geometry_ == b.geometry_ && a.seed() == b.seed() && a.replica() == b.replica() &&
         a.band_ == b.band_ && a.overrides_ == b.overrides_;
}

NoisePath sample_noise(std::shared_ptr<const PathGeometry> geometry, std::uint64_t seed,
                       std::uint64_t replica) {
  return NoisePath(std::move(geometry), seed, replica);
}

void add_band_values(SpectralField& f, const PathGeometry& geometry, std::size_t k,
                     std::span<const Complex> values, double scale) {
  const IntervalBand& b = geometry.band(k);
  const TorusGrid& full = geometry.grid();
  const TorusGrid& g = f.grid();
  const bool same = g.same_modes(full);
  for (std::size_t m = 0; m < b.size(); ++m) {
    if (same) {
      f[b.modes[m]] += scale * values[m];
      continue;
    }
    const Mode n = full.mode(b.modes[m]);
    if (g.contains(n)) f[g.index(n)] += scale * values[m];
  }
}

SpectralField apply_j_bar(const PathGeometry& geometry, std::size_t k, const SpectralField& f) {
  const IntervalBand& b = geometry.band(k);
  const TorusGrid& full = geometry.grid();
  SpectralField out(geometry.band_grid(k));
  const TorusGrid& og = out.grid();
  const TorusGrid& fg = f.grid();
  for (std::size_t m = 0; m < b.size(); ++m) {
    const Mode n = full.mode(b.modes[m]);
    if (fg.contains(n)) out[og.index(n)] = b.j_bar[m] * f[fg.index(n)];
  }
  return out;
}

FreeFieldCursor::FreeFieldCursor(const NoisePath& noise)
    : noise_(&noise), w_(noise.geometry().knot_grid(0)) {}

void FreeFieldCursor::advance() {
  if (at_end()) throw std::out_of_range("FreeFieldCursor::advance: already at T");
  const PathGeometry& g = noise_->geometry();
  const int next = g.knot_cutoff(k_ + 1);
  if (next != w_.n_max()) w_ = w_.resized(next);
  const IntervalBand& b = g.band(k_);
  const std::span<const Complex> db = noise_->band_increments(k_);
  std::vector<Complex> dw(b.size());
  for (std::size_t m = 0; m < b.size(); ++m) dw[m] = b.j_bar[m] * db[m];
  add_band_values(w_, g, k_, dw);
  ++k_;
}

FieldPath build_W(const NoisePath& noise) {
  FieldPath path{noise.geometry_ptr(), {}};
  path.snapshots.reserve(noise.geometry().knot_count());
  FreeFieldCursor cursor(noise);
  path.snapshots.push_back(cursor.field());
  while (!cursor.at_end()) {
    cursor.advance();
    path.snapshots.push_back(cursor.field());
  }
  return path;
}

FieldPath integrate_drift(const DriftPath& u, std::shared_ptr<const PathGeometry> geometry) {
  if (!geometry) throw std::invalid_argument("integrate_drift: null geometry");
  const PathGeometry& g = *geometry;
  if (u.size() != g.interval_count())
    throw std::invalid_argument("integrate_drift: need one drift value per interval");
  FieldPath path{geometry, {}};
  path.snapshots.reserve(g.knot_count());
  SpectralField acc(g.knot_grid(0));
  path.snapshots.push_back(acc);
  for (std::size_t k = 0; k < u.size(); ++k) {
    acc = acc.resized(g.knot_cutoff(k + 1));
    acc.add_scaled(apply_j_bar(g, k, u[k]), g.dt(k));
    path.snapshots.push_back(acc);
  }
  return path;
}

double girsanov_pairing(const SpectralField& u_k, const NoisePath& noise, std::size_t k) {
  const TorusGrid& g = u_k.grid();
  double acc = 0.0;
  for (std::size_t i = 0; i < u_k.size(); ++i) {
    if (u_k[i] == Complex(0.0)) continue;
    acc += (u_k[i] * std::conj(noise.increment(k, g.mode(i)))).real();
  }
  return acc;
}

double girsanov_log_weight(const DriftPath& u, const NoisePath& noise) {
  const PathGeometry& g = noise.geometry();
  if (u.size() != g.interval_count())
    throw std::invalid_argument("girsanov_log_weight: need one drift value per interval");
  double pairing = 0.0, energy = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    pairing += girsanov_pairing(u[k], noise, k);
    energy += l2_norm_sq(u[k]) * g.dt(k);
  }
  return pairing - 0.5 * energy;
}

SpectralField sample_terminal_field(const TorusGrid& grid, const Symbols& symbols, double T,
                                    std::uint64_t seed, std::uint64_t replica,
                                    StreamPurpose purpose) {
  if (!(T > 0.0)) throw std::domain_error("sample_terminal_field: T must be > 0");
  const CounterStream stream(seed, replica, purpose);
  SpectralField out(grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Mode n = grid.mode(i);
    const double b = bracket(n);
    const double r = symbols.rho(T, b);
    if (r == 0.0) continue;
    out[i] = orbit_normal(stream, 0xFFFFFFFFu, n, r * r / (b * b));
  }
  return out;
}

}  // namespace scalefield
