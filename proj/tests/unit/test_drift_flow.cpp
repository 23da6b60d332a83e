#include <doctest.h>

#include <cmath>

#include "scalefield/drift.hpp"
#include "scalefield/transform.hpp"
#include "test_support.hpp"

using namespace scalefield;
using namespace scalefield::testing;

namespace {

std::shared_ptr<const PathGeometry> geometry(double T, int n_max = 1, double resolution = 1.0) {
  const TorusGrid grid = TorusGrid::with_modes(n_max);
  return PathGeometry::make(grid, make_schedule(grid, T, resolution));
}

DriftParams coupled(double lambda, bool aux = true) {
  DriftParams p;
  p.lambda = lambda;
  p.aux = aux;
  return p;
}

double max_norm(const DriftPath& u) {
  double m = 0.0;
  for (const auto& f : u) m = std::max(m, l2_norm(f));
  return m;
}

}  // namespace

TEST_CASE("xi_step vanishes without coupling and auxiliary term") {
  const auto geo = geometry(3.0);
  const DriftContext ctx(geo);
  std::mt19937_64 rng(1);
  for (std::size_t k = 0; k < geo->interval_count(); k += 3) {
    const SpectralField H = random_real_field(geo->knot_grid(k), rng, 0.5);
    CHECK(max_abs(xi_step(k, H, H, coupled(0.0, false), ctx)) == 0.0);
  }
}

TEST_CASE("paraproduct term only from T_bar on") {
  const auto geo = geometry(4.0, 2);
  const DriftContext ctx(geo);
  DriftParams p = coupled(0.5, false);
  p.T_bar = 2.0;
  std::mt19937_64 rng(2);
  bool seen_below = false, seen_above = false;
  for (std::size_t k = 0; k < geo->interval_count(); ++k) {
    if (geo->band(k).size() == 0) continue;
    const TorusGrid g = geo->knot_grid(k);
    const SpectralField H = random_real_field(g, rng, 0.5);
    const SpectralField I = random_real_field(g, rng, 1.0);
    const SpectralField with = xi_step(k, H, ctx.flat(k, I), p, ctx);
    const SpectralField without = xi_step(k, H, SpectralField(g), p, ctx);
    const double d = max_abs_diff(with, without);
    if (geo->knot(k) < p.T_bar) {
      CHECK(d == 0.0);
      seen_below = true;
    } else if (max_abs(ctx.flat(k, I)) > 0.0) {
      CHECK(d > 0.0);
      seen_above = true;
    }
  }
  CHECK(seen_below);
  CHECK(seen_above);
}

TEST_CASE("expanded Wick form agrees with the direct Hermite evaluation") {
  const auto geo = geometry(4.0, 2);
  const DriftContext ctx(geo);
  DriftParams p = coupled(0.7);
  p.T_bar = 1.5;
  std::mt19937_64 rng(3);
  int checked = 0;
  for (std::size_t k = 0; k < geo->interval_count(); ++k) {
    if (geo->band(k).size() == 0) continue;
    const TorusGrid g = geo->knot_grid(k);
    const SpectralField W = random_real_field(g, rng, 0.5);
    const SpectralField I = 0.3 * random_real_field(g, rng, 1.0);
    const SpectralField flat = ctx.flat(k, I);
    const SpectralField direct = xi_step(k, W - I, flat, p, ctx);
    const SpectralField expanded = xi_step_expanded(k, W, I, flat, p, ctx);
    CHECK(max_abs_diff(direct, expanded) <= 1e-9 * std::max(1.0, max_abs(direct)));
    ++checked;
  }
  CHECK(checked > 5);
}

TEST_CASE("zero coupling gives the free field") {
  const auto geo = geometry(3.0);
  const DriftContext ctx(geo);
  const NoisePath noise(geo, 5, 0);
  const DriftRun p = solve_under_P(noise, coupled(0.0, false), ctx);
  CHECK(p.complete);
  CHECK(max_norm(p.u) == 0.0);
  CHECK(max_abs(p.Iu_T) == 0.0);
  CHECK(p.stop_index == geo->interval_count());
  const DriftRun q = solve_under_Q(noise, coupled(0.0, false), ctx);
  CHECK(max_abs_diff(q.W_T, q.Wtilde_T) == 0.0);
  CHECK(max_abs_diff(q.W_T, build_W(noise).terminal()) < 1e-14);
  DriftRun r = q;
  CHECK(log_density_DT(r, 1.0, 2.0) == 0.0);
}

TEST_CASE("zero stopping budget freezes the drift at once") {
  const auto geo = geometry(3.0);
  const DriftContext ctx(geo);
  const NoisePath noise(geo, 5, 1);
  DriftParams p = coupled(0.4);
  p.N_stop = 0.0;
  const DriftRun run = solve_under_P(noise, p, ctx);
  CHECK(run.stop_index == 0);
  CHECK(max_norm(run.u) == 0.0);
  CHECK(run.total_energy() == 0.0);
}

TEST_CASE("stop index agrees with the recomputed running integral") {
  const auto geo = geometry(4.0, 1, 2.0);
  const DriftContext ctx(geo);
  const NoisePath noise(geo, 9, 0);
  DriftParams p = coupled(0.4);
  const DriftRun free_run = solve_under_P(noise, p, ctx);
  REQUIRE(free_run.total_energy() > 0.0);
  p.N_stop = 0.5 * free_run.total_energy();
  const DriftRun run = solve_under_P(noise, p, ctx);
  const std::size_t s = run.stop_index;
  REQUIRE(s > 0);
  REQUIRE(s < geo->interval_count());
  double e = 0.0;
  std::vector<double> running{0.0};
  for (std::size_t k = 0; k < run.u.size(); ++k) {
    e += l2_norm_sq(run.u[k]) * geo->dt(k);
    running.push_back(e);
  }
  CHECK(running[s] >= p.N_stop);
  CHECK(running[s - 1] < p.N_stop);
  for (std::size_t k = s; k < run.u.size(); ++k) CHECK(max_abs(run.u[k]) == 0.0);
  // before stopping the two runs coincide
  for (std::size_t k = 0; k < s; ++k) CHECK(max_abs_diff(run.u[k], free_run.u[k]) == 0.0);
}

TEST_CASE("drift is adapted to the noise") {
  const auto geo = geometry(3.0);
  const DriftContext ctx(geo);
  const NoisePath base(geo, 11, 0);
  DriftParams p = coupled(0.5);
  p.N_stop = 30.0;
  const DriftRun ref = solve_under_Q(base, p, ctx);
  const std::size_t K = geo->interval_count();
  for (std::size_t j : {std::size_t(1), K / 2, K - 2}) {
    const IntervalBand& band = geo->band(j);
    if (band.size() == 0) continue;
    NoisePath noise = base;
    const Mode n = geo->grid().mode(band.modes.front());
    noise.set_increment(j, n, base.increment(j, n) + Complex(0.7, 0.2));
    for (DriftMode mode : {DriftMode::under_P, DriftMode::under_Q}) {
      const DriftRun a = mode == DriftMode::under_P ? solve_under_P(base, p, ctx) : ref;
      const DriftRun b = mode == DriftMode::under_P ? solve_under_P(noise, p, ctx)
                                                    : solve_under_Q(noise, p, ctx);
      REQUIRE(a.complete);
      REQUIRE(b.complete);
      for (std::size_t k = 0; k <= j; ++k) CHECK(max_abs_diff(a.u[k], b.u[k]) == 0.0);
      double later = 0.0;
      for (std::size_t k = j + 1; k < K; ++k) later = std::max(later, max_abs_diff(a.u[k], b.u[k]));
      if (a.stop_index > j + 1 && geo->band(j + 1).size() > 0) CHECK(later > 0.0);
    }
  }
}

TEST_CASE("under Q the sample is the free path plus the integrated drift") {
  const auto geo = geometry(4.0, 2);
  const DriftContext ctx(geo);
  DriftParams p = coupled(0.3);
  p.picard_iterations = 1;
  for (std::uint64_t r = 0; r < 3; ++r) {
    const NoisePath noise(geo, 21, r);
    const DriftRun run = solve_under_Q(noise, p, ctx);
    REQUIRE(run.complete);
    const FieldPath W = build_W(noise);
    const FieldPath I = integrate_drift(run.u, geo);
    for (std::size_t k = 0; k < W.size(); ++k) {
      CHECK(max_abs_diff(run.Wtilde[k], W[k]) < 1e-12);
      CHECK(max_abs_diff(run.W[k], W[k] + I[k]) < 1e-10);
    }
    CHECK(max_abs_diff(run.W_T, W.terminal() + I.terminal()) < 1e-10);
  }
}

TEST_CASE("log density and Girsanov weight cancel up to the potential") {
  const auto geo = geometry(3.0, 2);
  const DriftContext ctx(geo);
  const Counterterms ct = default_counterterms(3.0, 0.2, ctx.wick());
  for (DriftMode mode : {DriftMode::under_P, DriftMode::under_Q}) {
    const NoisePath noise(geo, 31, 0);
    DriftParams p = coupled(0.2);
    p.N_stop = 20.0;  // the unstopped equation under P explodes on this path
    DriftRun run = mode == DriftMode::under_P ? solve_under_P(noise, p, ctx)
                                              : solve_under_Q(noise, p, ctx);
    REQUIRE(run.complete);
    const double logD = log_density_DT(run, ct.a, ct.b);
    const double v = potential_V(run.W_T, 0.2, ct.a, ct.b);
    CHECK(std::abs(logD + run.log_weight + v) < 1e-10 * std::max(1.0, std::abs(v)));
    CHECK(run.log_weight == doctest::Approx(girsanov_log_weight(run.u, noise) +
                                            (mode == DriftMode::under_Q ? run.total_energy() : 0.0))
                                .epsilon(1e-12));
  }
  DriftOptions o;
  o.horizon = 1.5;
  DriftRun cut = solve_under_P(NoisePath(geo, 31, 0), coupled(0.2), ctx, o);
  CHECK_FALSE(cut.complete);
  CHECK_THROWS_AS(log_density_DT(cut, ct.a, ct.b), std::logic_error);
  DriftRun blown = solve_under_P(NoisePath(geo, 31, 0), coupled(0.2), ctx);
  CHECK(blown.aborted);
  CHECK_FALSE(blown.diagnostic.empty());
  CHECK_THROWS_AS(log_density_DT(blown, ct.a, ct.b), std::logic_error);
}

TEST_CASE("parameter validation") {
  const auto geo = geometry(2.0);
  const DriftContext ctx(geo);
  const NoisePath noise(geo, 1, 0);
  DriftParams p;
  p.n_aux = 4;
  CHECK_THROWS_AS(solve_under_P(noise, p, ctx), std::invalid_argument);
  p = DriftParams{};
  p.lambda = -1.0;
  CHECK_THROWS_AS(solve_under_Q(noise, p, ctx), std::invalid_argument);
  const auto other = geometry(2.0);
  CHECK_THROWS_AS(solve_under_P(NoisePath(other, 1, 0), DriftParams{}, ctx), std::invalid_argument);
}

TEST_CASE("shift decomposition of the drift is an exact identity") {
  const auto geo = geometry(3.0, 2);
  const DriftContext ctx(geo);
  const std::size_t K = geo->interval_count();
  {
    const DriftRun run = solve_under_Q(NoisePath(geo, 41, 0), coupled(0.0, false), ctx);
    const RemainderReport rep =
        remainder_decomposition(run, DriftPath(K, SpectralField(geo->knot_grid(0))), ctx);
    CHECK(max_norm(rep.r_w) == 0.0);
    CHECK(rep.residual == 0.0);
  }
  std::mt19937_64 rng(42);
  DriftParams p = coupled(0.6);
  p.T_bar = 1.5;
  for (int trial = 0; trial < 20; ++trial) {
    const DriftRun run = solve_under_Q(NoisePath(geo, 43, std::uint64_t(trial)), p, ctx);
    DriftPath w;
    for (std::size_t k = 0; k < K; ++k) w.push_back(0.2 * random_real_field(geo->band_grid(k), rng));
    const RemainderReport rep = remainder_decomposition(run, w, ctx);
    REQUIRE(rep.scale > 0.0);
    CHECK(rep.residual < 1e-8);
    CHECK(rep.l_residual < 1e-8);
  }
}

TEST_CASE("drift-measure mean equals the mean of the integrated drift (MC)") {
  const auto geo = geometry(3.0);
  const DriftContext ctx(geo);
  DriftParams p = coupled(0.3);
  DriftOptions o;
  o.record_paths = false;
  MeanAccumulator diff, wt;
  for (std::uint64_t r = 0; r < 2000; ++r) {
    const DriftRun run = solve_under_Q(NoisePath(geo, 51, r), p, ctx, o);
    const double w = run.W_T.at({0, 0, 0}).real() + run.W_T.at({1, 0, 0}).real();
    const double i = run.Iu_T.at({0, 0, 0}).real() + run.Iu_T.at({1, 0, 0}).real();
    diff.add(w - i);
    wt.add(w);
  }
  CHECK(std::abs(diff.mean) < 3.0 * diff.stderr_mean());
}
