#include <doctest.h>

#include <cmath>

#include "scalefield/bd.hpp"
#include "scalefield/transform.hpp"
#include "test_support.hpp"

using namespace scalefield;
using namespace scalefield::testing;

namespace {

std::shared_ptr<const PathGeometry> geometry(double T, int n_max = 1, double resolution = 1.0) {
  const TorusGrid grid = TorusGrid::with_modes(n_max);
  return PathGeometry::make(grid, make_schedule(grid, T, resolution));
}

BdParams quartic(double lambda, const WickContext& wick, double T) {
  BdParams p;
  p.lambda = lambda;
  const Counterterms ct = default_counterterms(T, lambda, wick);
  p.a = ct.a;
  p.b = ct.b;
  return p;
}

BdParams quadratic(double m) {
  BdParams p;
  p.functional = Functional::quadratic;
  p.mass = m;
  return p;
}

void randomize(DriftAnsatz& ansatz, std::mt19937_64& rng, double open, double gain) {
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < ansatz.size(); ++i) {
    if (!ansatz.is_active(i)) continue;
    ansatz.coefficients[i] = (i % DriftAnsatz::kSlots == DriftAnsatz::gain ? gain : open) * z(rng);
  }
}

}  // namespace

TEST_CASE("ansatz layout follows the band orbits") {
  const auto geo = geometry(3.0, 2);
  const DriftAnsatz a(geo, AnsatzKind::raw);
  std::size_t orbits = 0;
  for (std::size_t k = 0; k < geo->interval_count(); ++k) {
    std::size_t reps = 0;
    for (auto idx : geo->band(k).modes) reps += is_orbit_representative(geo->grid().mode(idx));
    CHECK(a.orbit_count(k) == reps);
    orbits += reps;
  }
  CHECK(a.size() == orbits * DriftAnsatz::kSlots);
  std::size_t inactive = 0;
  for (std::size_t i = 0; i < a.size(); ++i) inactive += !a.is_active(i);
  std::size_t zero_orbits = 0;
  for (std::size_t k = 0; k < geo->interval_count(); ++k)
    for (std::size_t j = 0; j < a.orbit_count(k); ++j)
      zero_orbits += geo->grid().mode(a.orbit_mode(k, j)) == Mode{0, 0, 0};
  CHECK(inactive == zero_orbits);
}

TEST_CASE("zero coupling and zero drift cost nothing") {
  const auto geo = geometry(3.0);
  const DriftContext ctx(geo);
  const DriftAnsatz a(geo, AnsatzKind::raw);
  const auto batch = make_batch(geo, 1, 0, 4);
  const Estimate e = bd_objective(a, batch, BdParams{}, ctx);
  CHECK(e.value == 0.0);
  CHECK(e.std_error == 0.0);
  const Estimate d = direct_log_partition(geo->grid(), geo->symbols(), 3.0, BdParams{}, 100, 1);
  CHECK(d.value == 0.0);
  CHECK(d.std_error == 0.0);
  CHECK_THROWS_AS(bd_objective(a, std::span<const NoisePath>{}, BdParams{}, ctx), std::invalid_argument);
  CHECK_THROWS_AS(direct_log_partition(geo->grid(), geo->symbols(), 3.0, BdParams{}, 99, 1),
                  std::invalid_argument);
}

TEST_CASE("functional gradient matches finite differences") {
  const TorusGrid g = TorusGrid::with_modes(2);
  const WickContext wick(g);
  std::mt19937_64 rng(3);
  const SpectralField phi = random_real_field(g, rng, 1.0);
  BdParams q = quartic(0.3, wick, 3.0);
  q.probe = 0.1 * random_real_field(g, rng, 1.0);
  for (const BdParams& p : {q, quadratic(1.3)}) {
    const SpectralField grad = functional_gradient(phi, p);
    for (const Mode n : {Mode{0, 0, 0}, Mode{1, 0, 0}, Mode{1, -2, 1}}) {
      for (const Complex dir : {Complex(1, 0), Complex(0, 1)}) {
        if (n == Mode{0, 0, 0} && dir.imag() != 0.0) continue;
        const double h = 1e-5;
        const SpectralField d = single_mode(g, n, dir);
        const double fd =
            (functional_value(phi + h * d, p) - functional_value(phi - h * d, p)) / (2.0 * h);
        const double an = inner(grad, d);
        CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(an)));
      }
    }
  }
}

TEST_CASE("pathwise gradient matches central differences") {
  const auto geo = geometry(3.0, 1);
  const DriftContext ctx(geo);
  const auto batch = make_batch(geo, 5, 0, 3);
  std::mt19937_64 rng(6);
  for (AnsatzKind kind : {AnsatzKind::raw, AnsatzKind::renormalized}) {
    DriftAnsatz a(geo, kind);
    randomize(a, rng, 0.3, 0.2);
    for (const BdParams& p : {quartic(0.3, ctx.wick(), 3.0), quadratic(1.0)}) {
      const GradientCheck c = check_gradient(a, batch, p, ctx, 20, 7);
      CHECK(c.coordinates.size() == 20);
      CHECK(c.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("without coupling the gradient is the energy term") {
  const auto geo = geometry(3.0, 1);
  const DriftContext ctx(geo);
  const auto batch = make_batch(geo, 5, 0, 2);
  DriftAnsatz a(geo, AnsatzKind::raw);
  std::mt19937_64 rng(8);
  randomize(a, rng, 0.5, 0.0);
  const std::vector<double> grad = gradient(a, batch, BdParams{}, ctx);
  for (std::size_t k = 0; k < geo->interval_count(); ++k)
    for (std::size_t j = 0; j < a.orbit_count(k); ++j) {
      const bool zero = geo->grid().mode(a.orbit_mode(k, j)) == Mode{0, 0, 0};
      const double w = (zero ? 1.0 : 2.0) * geo->dt(k);
      for (auto s : {DriftAnsatz::open_re, DriftAnsatz::open_im}) {
        const std::size_t i = a.index(k, j, s);
        CHECK(grad[i] == doctest::Approx(w * a.coefficients[i]).epsilon(1e-12));
      }
    }
}

TEST_CASE("gradient at zero drift is the quartic response of the terminal field") {
  const auto geo = geometry(3.0, 1);
  const DriftContext ctx(geo);
  const auto batch = make_batch(geo, 9, 0, 3);
  const DriftAnsatz a(geo, AnsatzKind::raw);
  BdParams p;
  p.lambda = 0.4;
  const std::vector<double> grad = gradient(a, batch, p, ctx);
  // 4 lambda int W_T^3 e_{-n}, by direct convolution, paired with dt_k Jbar_k(n)
  std::vector<SpectralField> cubes;
  for (const NoisePath& noise : batch) {
    const SpectralField w = build_W(noise).terminal();
    cubes.push_back(direct_convolution(direct_convolution(w, w), w));
  }
  std::size_t checked = 0;
  for (std::size_t k = 0; k < geo->interval_count(); ++k)
    for (std::size_t j = 0; j < a.orbit_count(k); ++j) {
      const Mode n = geo->grid().mode(a.orbit_mode(k, j));
      const double w = n == Mode{0, 0, 0} ? 1.0 : 2.0;
      const double jb = geo->j_bar(k, a.orbit_mode(k, j));
      Complex mean = 0.0;
      for (const auto& c : cubes) mean += c.at(n);
      mean /= double(cubes.size());
      const Complex want = w * geo->dt(k) * jb * 4.0 * p.lambda * mean;
      CHECK(std::abs(grad[a.index(k, j, DriftAnsatz::open_re)] - want.real()) < 1e-8);
      if (n != Mode{0, 0, 0})
        CHECK(std::abs(grad[a.index(k, j, DriftAnsatz::open_im)] - want.imag()) < 1e-8);
      ++checked;
    }
  CHECK(checked > 0);
}

TEST_CASE("direct estimate of the Gaussian surrogate matches the closed form") {
  const TorusGrid g = TorusGrid::with_modes(2);
  const Symbols sym;
  const double want = quadratic_closed_form(g, sym, 4.0, 1.0);
  const Estimate d = direct_log_partition(g, sym, 4.0, quadratic(1.0), 10000, 11);
  CHECK(std::abs(d.value - want) < 3.0 * d.std_error);
  double manual = 0.0;
  for (std::size_t i = 0; i < g.mode_count(); ++i) {
    const double r = sym.eval_rho(4.0, g.mode(i));
    manual += 0.5 * std::log(1.0 + r * r / (1.0 + squared_norm(g.mode(i))));
  }
  CHECK(want == doctest::Approx(manual).epsilon(1e-14));
}

TEST_CASE("every tested drift sits above the log partition estimate") {
  const auto geo = geometry(3.0, 1);
  const DriftContext ctx(geo);
  const auto batch = make_batch(geo, 13, 0, 400);
  std::mt19937_64 rng(14);
  for (const BdParams& p : {quadratic(1.0), quartic(0.3, ctx.wick(), 3.0)}) {
    const Estimate d = direct_log_partition(geo->grid(), geo->symbols(), 3.0, p, 4000, 15);
    for (int trial = 0; trial < 3; ++trial) {
      DriftAnsatz a(geo, AnsatzKind::raw);
      if (trial > 0) randomize(a, rng, 0.3 * trial, 0.1 * trial);
      const Estimate e = bd_objective(a, batch, p, ctx);
      CHECK(e.value >= d.value - 2.0 * (e.std_error + d.std_error));
    }
  }
}

TEST_CASE("optimizer reaches the Gaussian closed form") {
  const auto geo = geometry(3.0, 1, 2.0);
  OptConfig c;
  c.epochs = 40;
  c.batch = 64;
  c.eval_batch = 1024;
  c.direct_replicas = 2000;
  c.gradcheck_coordinates = 5;
  c.seed = 3;
  const OptReport r = optimize(geo, quadratic(1.0), c);
  const double want = quadratic_closed_form(geo->grid(), geo->symbols(), 3.0, 1.0);
  CHECK_FALSE(r.aborted);
  CHECK(std::abs(r.final_value - want) <= 0.02 * want);
  CHECK(r.final_std_error > 0.0);
  CHECK(r.gradient_check.max_relative_error < 1e-4);
  CHECK(r.crn_difference_variance <= r.independent_difference_variance);
  for (double v : r.trace) CHECK(std::isfinite(v));
  CHECK(r.trace.back() < r.trace.front());
  // deterministic given the seed
  const OptReport again = optimize(geo, quadratic(1.0), c);
  CHECK(again.coefficients == r.coefficients);
  CHECK(again.final_value == r.final_value);
}

TEST_CASE("optimizer without coupling stays at the zero drift") {
  const auto geo = geometry(3.0, 1);
  OptConfig c;
  c.epochs = 10;
  c.batch = 8;
  c.eval_batch = 16;
  c.direct_replicas = 0;
  c.gradcheck_coordinates = 0;
  const OptReport r = optimize(geo, BdParams{}, c);
  CHECK(r.final_value == 0.0);
  for (double x : r.coefficients) CHECK(x == 0.0);
}
