#include "scalefield/singularity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "scalefield/parallel.hpp"
#include "scalefield/transform.hpp"

namespace scalefield {

namespace {

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 0.5)) throw std::invalid_argument("delta must lie in (0, 1/2)");
}

// Smallest cube holding supp theta_T, capped by the field's own cutoff.
int theta_cutoff(double T, const Symbols& symbols, int n_max) {
  return std::min(n_max, int(std::ceil(symbols.params().theta_outer * T)));
}

// Last scale at which the integrand of the cross term can be nonzero.
double active_end(double T, const Symbols& symbols) {
  return std::min(T, theta_horizon(T, symbols));
}

void check_reach(const PathGeometry& g, double T, const char* where) {
  if (g.schedule().T() < active_end(T, g.symbols()) * (1.0 - 1e-12))
    throw std::invalid_argument(std::string(where) + ": path ends before min(T, theta horizon)");
}

// dt_k <theta_T J_t 4[[X^3]]_{c_theta,t}, J_t W3(W_t)> at knot k, with X = theta_T W_t.
double cross_integrand(const SpectralField& w, std::size_t k, double T, const PathGeometry& g,
                       const WickContext& ctx) {
  const Symbols& sym = g.symbols();
  const double t = g.knot(k);
  const int nt = theta_cutoff(T, sym, w.n_max());
  const SpectralField x = apply_theta(sym, T, w.resized(nt));
  const SpectralField left =
      apply_theta(sym, T, apply_j(sym, t, bold_W3(x, ctx.c_theta_t(T, t), nt)));
  const SpectralField right = apply_j(sym, t, bold_W3(w, ctx.c(t), nt));
  return g.dt(k) * inner(left, right);
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

double quartic_wick_integral(const SpectralField& f, double T, const WickContext& ctx) {
  return quartic_wick_integral(f, T, ctx.c_theta(T), ctx.symbols());
}

double quartic_wick_integral(const SpectralField& f, double T, double c, const Symbols& symbols) {
  const int nt = theta_cutoff(T, symbols, f.n_max());
  const SpectralField x = apply_theta(symbols, T, f.resized(nt));
  return wick_power(x, 4, c, 0).mean().real();
}

double free_quartic_second_moment(const TorusGrid& grid, const Symbols& symbols, double T) {
  const TorusGrid g = grid.with_cutoff(theta_cutoff(T, symbols, grid.n_max()));
  SpectralField cov(g);
  for (std::size_t i = 0; i < g.mode_count(); ++i) {
    const Mode n = g.mode(i);
    const double th = symbols.eval_theta(T, n);
    cov[i] = th * th / (1.0 + squared_norm(n));
  }
  return 24.0 * map_pointwise(cov, 4, 0, [](double x) { return x * x * x * x; }).mean().real();
}

double s_statistic(const SpectralField& f, double T, double delta, const WickContext& ctx) {
  check_delta(delta);
  return quartic_wick_integral(f, T, ctx) / std::pow(T, 0.5 * (1.0 + delta));
}

double divergence_statistic(const SpectralField& f, double T, double delta, const WickContext& ctx) {
  check_delta(delta);
  return quartic_wick_integral(f, T, ctx) / std::pow(T, 1.0 - delta);
}

double theta_horizon(double T, const Symbols& symbols) {
  const double r = symbols.params().theta_outer * T;
  return std::sqrt(1.0 + r * r) / symbols.params().rho_plateau;
}

double cross_term(const FieldPath& W, double T, const WickContext& ctx) {
  if (!W.geometry) throw std::invalid_argument("cross_term: path without geometry");
  const PathGeometry& g = *W.geometry;
  check_reach(g, T, "cross_term");
  if (W.size() < g.knot_count()) throw std::invalid_argument("cross_term: path is not recorded to the end");
  const double end = active_end(T, g.symbols());
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < g.knot_count() && g.knot(k) < end; ++k)
    if (g.knot(k) > 0.0) s += cross_integrand(W[k], k, T, g, ctx);
  return s;
}

double cross_term(const DriftRun& run, double T, const WickContext& ctx) {
  if (!run.recorded) throw std::invalid_argument("cross_term: run was not recorded");
  if (!run.complete) throw std::invalid_argument("cross_term: run did not reach its terminal scale");
  return cross_term(run.W, T, ctx);
}

double cross_term(const NoisePath& noise, double T, const WickContext& ctx) {
  const PathGeometry& g = noise.geometry();
  check_reach(g, T, "cross_term");
  const double end = active_end(T, g.symbols());
  FreeFieldCursor cursor(noise);
  double s = 0.0;
  for (;;) {
    const std::size_t k = cursor.knot();
    if (cursor.at_end() || g.knot(k) >= end) break;
    if (g.knot(k) > 0.0) s += cross_integrand(cursor.field(), k, T, g, ctx);
    cursor.advance();
  }
  return s;
}

ItoCheck ito_representation_check(const NoisePath& noise, double T, const WickContext& ctx) {
  const PathGeometry& g = noise.geometry();
  check_reach(g, T, "ito_representation_check");
  const Symbols& sym = g.symbols();
  const int nt = theta_cutoff(T, sym, g.grid().n_max());
  FreeFieldCursor cursor(noise);
  ItoCheck out;
  SpectralField x = apply_theta(sym, T, cursor.field().resized(nt));
  while (!cursor.at_end()) {
    const double t = g.knot(cursor.knot());
    const SpectralField w3 = bold_W3(x, ctx.c_theta_t(T, t), nt);
    cursor.advance();
    const SpectralField next = apply_theta(sym, T, cursor.field().resized(nt));
    out.integral_side += inner(w3, next - x);
    x = next;
  }
  out.wick_side = wick_power(x, 4, ctx.c_theta(T), 0).mean().real();
  out.residual = std::abs(out.wick_side - out.integral_side);
  return out;
}

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<double>& se) {
  if (x.size() != y.size() || x.size() != se.size())
    throw std::invalid_argument("fit_loglog: size mismatch");
  double sw = 0.0, sx = 0.0, sy = 0.0;
  std::vector<double> lx, ly, w;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0 && se[i] > 0.0)) continue;
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
    const double rel = se[i] / y[i];
    w.push_back(1.0 / (rel * rel));
  }
  if (lx.size() < 3) throw std::invalid_argument("fit_loglog: need at least 3 usable points");
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sw += w[i];
    sx += w[i] * lx[i];
    sy += w[i] * ly[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += w[i] * (lx[i] - mx) * (lx[i] - mx);
    sxy += w[i] * (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_loglog: x values must differ");
  SlopeFit f;
  f.points = lx.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  // weights are inverse variances, so the slope variance is 1 / sxx
  f.std_error = std::sqrt(1.0 / sxx);
  f.ci_low = f.slope - 1.959963984540054 * f.std_error;
  f.ci_high = f.slope + 1.959963984540054 * f.std_error;
  return f;
}

TrendTest jonckheere_decreasing(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw std::invalid_argument("jonckheere_decreasing: need two groups");
  TrendTest out;
  double N = 0.0, sn2 = 0.0, sa = 0.0, sb = 0.0, sc = 0.0;
  std::map<double, double> ties;
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("jonckheere_decreasing: empty group");
    const double n = double(g.size());
    N += n;
    sn2 += n * n;
    sa += n * (n - 1.0) * (2.0 * n + 5.0);
    sb += n * (n - 1.0) * (n - 2.0);
    sc += n * (n - 1.0);
    for (double v : g) ties[v] += 1.0;
  }
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      std::vector<double> later = groups[j];
      std::sort(later.begin(), later.end());
      for (double a : groups[i]) {
        const auto lo = std::lower_bound(later.begin(), later.end(), a);
        const auto hi = std::upper_bound(later.begin(), later.end(), a);
        out.statistic += double(lo - later.begin()) + 0.5 * double(hi - lo);
      }
    }
  double ta = 0.0, tb = 0.0, tc = 0.0;
  for (const auto& [v, t] : ties) {
    ta += t * (t - 1.0) * (2.0 * t + 5.0);
    tb += t * (t - 1.0) * (t - 2.0);
    tc += t * (t - 1.0);
  }
  const double mean = (N * N - sn2) / 4.0;
  double var = (N * (N - 1.0) * (2.0 * N + 5.0) - sa - ta) / 72.0;
  if (N > 2.0) var += sb * tb / (36.0 * N * (N - 1.0) * (N - 2.0));
  var += sc * tc / (8.0 * N * (N - 1.0));
  if (!(var > 0.0)) return out;
  out.z = (out.statistic - mean) / std::sqrt(var);
  out.p_value = normal_upper_tail(out.z);
  return out;
}

ScanPoint summarize_scan_point(double T, std::vector<double> samples, std::size_t aborted) {
  ScanPoint p;
  p.T = T;
  p.aborted = aborted;
  p.replicas = samples.size();
  const double n = double(samples.size());
  if (samples.empty()) {
    p.samples = std::move(samples);
    return p;
  }
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  for (double v : samples) {
    s1 += v;
    s2 += v * v;
    s4 += v * v * v * v;
  }
  p.mean = s1 / n;
  p.second_moment = s2 / n;
  if (n > 1.0) {
    p.mean_se = std::sqrt(std::max(0.0, (s2 / n - p.mean * p.mean) * n / (n - 1.0)) / n);
    p.second_moment_se =
        std::sqrt(std::max(0.0, (s4 / n - p.second_moment * p.second_moment) * n / (n - 1.0)) / n);
  }
  p.samples = std::move(samples);
  return p;
}

namespace {

std::uint64_t scan_replica(std::size_t point, std::size_t r) {
  return (std::uint64_t(point) << 32) | std::uint64_t(r);
}

std::shared_ptr<const PathGeometry> horizon_geometry(const TorusGrid& grid, double T, double resolution,
                                                     const Symbols& symbols) {
  ScaleSchedule s = make_schedule(grid, T, resolution, symbols.params());
  const double end = active_end(T, symbols);
  if (end < s.T()) s = s.truncated(end);
  return PathGeometry::make(grid, std::move(s), symbols);
}

// Points with a positive estimate of `value`; fit skipped below three.
SlopeFit fit_points(const std::vector<ScanPoint>& points, bool second_moment) {
  std::vector<double> x, y, se;
  for (const auto& p : points) {
    x.push_back(p.T);
    y.push_back(second_moment ? p.second_moment : p.mean);
    se.push_back(second_moment ? p.second_moment_se : p.mean_se);
  }
  std::size_t usable = 0;
  for (std::size_t i = 0; i < x.size(); ++i) usable += y[i] > 0.0 && se[i] > 0.0;
  if (usable < 3) return {};
  return fit_loglog(x, y, se);
}

}  // namespace

ScanResult quartic_moment_scan(const TorusGrid& grid, const std::vector<double>& Ts,
                               std::size_t replicas, std::uint64_t seed, int workers) {
  const Symbols symbols;
  const WickContext ctx(grid, symbols);
  ScanResult out;
  for (std::size_t i = 0; i < Ts.size(); ++i) {
    std::vector<double> v(replicas);
    parallel_for(replicas, workers, [&](std::size_t r) {
      const SpectralField w = sample_terminal_field(grid, symbols, Ts[i], seed, scan_replica(i, r),
                                                    StreamPurpose::test_field);
      v[r] = quartic_wick_integral(w, Ts[i], ctx);
    });
    out.points.push_back(summarize_scan_point(Ts[i], std::move(v)));
  }
  out.fit = fit_points(out.points, true);
  return out;
}

ScanResult cross_term_scan(const TorusGrid& grid, const std::vector<double>& Ts, double resolution,
                           std::size_t replicas, std::uint64_t seed, int workers) {
  const Symbols symbols;
  const WickContext ctx(grid, symbols);
  ScanResult out;
  for (std::size_t i = 0; i < Ts.size(); ++i) {
    const auto geo = horizon_geometry(grid, Ts[i], resolution, symbols);
    std::vector<double> v(replicas);
    parallel_for(replicas, workers, [&](std::size_t r) {
      v[r] = cross_term(NoisePath(geo, seed, scan_replica(i, r)), Ts[i], ctx);
    });
    out.points.push_back(summarize_scan_point(Ts[i], std::move(v)));
  }
  out.fit = fit_points(out.points, false);
  return out;
}

ScanResult divergence_scan(const TorusGrid& grid, const std::vector<double>& Ts, double resolution,
                           const DriftParams& params, double delta, std::size_t replicas,
                           std::uint64_t seed, int workers) {
  check_delta(delta);
  params.validate();
  const Symbols symbols;
  ScanResult out;
  for (std::size_t i = 0; i < Ts.size(); ++i) {
    const auto geo = horizon_geometry(grid, Ts[i], resolution, symbols);
    const DriftContext ctx(geo);
    std::vector<double> v(replicas);
    std::vector<char> ok(replicas, 0);
    DriftOptions opt;
    opt.record_paths = false;
    parallel_for(replicas, workers, [&](std::size_t r) {
      const DriftRun run = solve_under_Q(NoisePath(geo, seed, scan_replica(i, r)), params, ctx, opt);
      if (run.aborted) return;
      ok[r] = 1;
      v[r] = divergence_statistic(run.W_T, Ts[i], delta, ctx.wick());
    });
    std::vector<double> kept;
    for (std::size_t r = 0; r < replicas; ++r)
      if (ok[r]) kept.push_back(v[r]);
    const std::size_t aborted = replicas - kept.size();
    out.points.push_back(summarize_scan_point(Ts[i], std::move(kept), aborted));
  }
  return out;
}

}  // namespace scalefield
