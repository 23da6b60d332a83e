#include "scalefield/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace scalefield {

ScaleSchedule::ScaleSchedule(std::vector<double> knots, double resolution)
    : knots_(std::move(knots)), resolution_(resolution) {
  if (knots_.size() < 2 || knots_.front() != 0.0)
    throw std::invalid_argument("ScaleSchedule: knots must start at 0 and contain T");
  for (std::size_t k = 1; k < knots_.size(); ++k)
    if (!(knots_[k] > knots_[k - 1]) || !std::isfinite(knots_[k]))
      throw std::invalid_argument("ScaleSchedule: knots must increase strictly");
}

std::size_t ScaleSchedule::count_in(double lo, double hi) const noexcept {
  const auto a = std::lower_bound(knots_.begin(), knots_.end(), lo);
  const auto b = std::lower_bound(knots_.begin(), knots_.end(), hi);
  return b > a ? std::size_t(b - a) : 0;
}

ScaleSchedule ScaleSchedule::truncated(double horizon) const {
  if (!(horizon > 0.0)) throw std::invalid_argument("ScaleSchedule::truncated: horizon must be > 0");
  std::vector<double> out;
  for (double t : knots_)
    if (t <= horizon) out.push_back(t);
  if (out.back() < horizon) out.push_back(horizon);
  return ScaleSchedule(std::move(out), resolution_);
}

int steps_per_band(double resolution) {
  return std::max(1, int(std::ceil(10.0 * resolution - 1e-9)));
}

ScaleSchedule make_schedule(const TorusGrid& grid, double T, double resolution,
                            const SymbolParams& params) {
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("make_schedule: T must be > 0");
  if (!(resolution > 0.0)) throw std::invalid_argument("make_schedule: resolution must be > 0");
  const int S = steps_per_band(resolution);
  const double log_q = std::log(params.rho_support / params.rho_plateau);
  const double h = log_q / S;

  const double q = std::exp(log_q);
  const double top = T * std::exp(-h * S);  // T / q

  std::vector<double> t{0.0, T};
  // Geometric lattice below T / q, down to the lowest band edge <0> = 1.
  for (int j = S + 1;; ++j) {
    const double v = T * std::exp(-h * j);
    if (v < 1.0 - 1e-12) break;
    t.push_back(v);
  }
  // Above T / q bands are cut by T; split at every band edge there and put
  // S geometric knots in each piece.
  // (no band starts below <0> = 1)
  const double floor_edge = std::max(top, 1.0);
  std::vector<double> edges{floor_edge, T};
  std::set<long> norms;
  const std::size_t count = grid.mode_count();
  for (std::size_t i = 0; i < count; ++i) norms.insert(long(squared_norm(grid.mode(i))));
  for (long n2 : norms) {
    const double a = std::sqrt(1.0 + double(n2));
    for (double e : {a, a * q})
      if (e > floor_edge && e < T) edges.push_back(e);
  }
  if (floor_edge >= T) edges.clear();
  std::sort(edges.begin(), edges.end());
  for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
    const double lo = edges[e], hi = edges[e + 1];
    if (hi - lo <= 1e-12 * T) continue;
    for (int i = 0; i < S; ++i) t.push_back(lo * std::pow(hi / lo, double(i) / S));
  }
  std::sort(t.begin(), t.end());
  std::vector<double> merged{0.0};
  const double tol = 1e-12 * std::max(1.0, T);
  for (std::size_t k = 1; k < t.size(); ++k)
    if (t[k] - merged.back() > tol) merged.push_back(t[k]);
  merged.back() = T;
  return ScaleSchedule(std::move(merged), resolution);
}

}  // namespace scalefield
