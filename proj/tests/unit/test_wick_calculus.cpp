#include <doctest.h>

#include <cmath>
#include <numbers>

#include "scalefield/gaussian_path.hpp"
#include "scalefield/transform.hpp"
#include "scalefield/wick.hpp"
#include "test_support.hpp"

using namespace scalefield;
using namespace scalefield::testing;

namespace {

SpectralField constant_field(const TorusGrid& g, double v) {
  SpectralField f(g);
  f.at({0, 0, 0}) = v;
  return f;
}

}  // namespace

TEST_CASE("Wick constants by mode enumeration") {
  const WickContext ctx(TorusGrid::with_modes(1));
  // 1 + 6/2 + 12/3 + 8/4
  CHECK(ctx.c(20.0) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(ctx.c_tilde(20.0) ==
        doctest::Approx(1.0 + 6.0 / std::pow(2.0, 1.5) + 12.0 / std::pow(3.0, 1.5) + 8.0 / 8.0)
            .epsilon(1e-14));
  const Counterterms ct = default_counterterms(20.0, 0.3, ctx);
  CHECK(ct.a == doctest::Approx(60.0).epsilon(1e-14));
  CHECK(ct.b == doctest::Approx(300.0).epsilon(1e-14));
  CHECK(default_counterterms(20.0, 0.0, ctx, 7.0).a == doctest::Approx(60.0));
  CHECK(default_counterterms(20.0, 0.5, ctx, 2.0).a == doctest::Approx(61.0));
  // theta_1 = 0 everywhere (zeta(1) = 0 and eta = 1 near the origin)
  CHECK(ctx.c_theta(1.0) == 0.0);
}

TEST_CASE("Wick constants are monotone in the scale") {
  const WickContext ctx(TorusGrid::with_modes(4));
  double prev = 0.0, prev_tilde = 0.0, prev_theta = 0.0;
  for (double t = 0.5; t < 9.0; t += 0.05) {
    CHECK(ctx.c(t) >= prev);
    CHECK(ctx.c_tilde(t) >= prev_tilde);
    CHECK(ctx.c_theta(t) >= prev_theta - 1e-15);
    CHECK(ctx.c_theta_t(6.0, t) <= ctx.c_theta(6.0) + 1e-14);
    prev = ctx.c(t);
    prev_tilde = ctx.c_tilde(t);
    prev_theta = ctx.c_theta(t);
  }
}

TEST_CASE("wick_power closed forms") {
  const TorusGrid g = TorusGrid::with_modes(2);
  const SpectralField zero(g);
  const SpectralField w2 = wick_power(zero, 2, 10.0);
  CHECK(max_abs_diff(w2, constant_field(g, -10.0)) < 1e-13);
  CHECK(max_abs_diff(wick_power(constant_field(g, 2.0), 3, 1.0), constant_field(g, 2.0)) < 1e-13);
  for (double x : {-1.3, 0.0, 0.4, 2.2})
    for (double c : {0.0, 0.7, 3.0}) {
      CHECK(wick_polynomial(4, x, c) == doctest::Approx(x * x * x * x - 6 * c * x * x + 3 * c * c));
      CHECK(wick_polynomial(5, x, c) ==
            doctest::Approx(std::pow(x, 5) - 10 * c * std::pow(x, 3) + 15 * c * c * x));
    }
  CHECK_THROWS_AS(wick_power(zero, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(wick_power(zero, 5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(wick_power(zero, 2, -1.0), std::invalid_argument);
}

TEST_CASE("wick_power matches the expanded product on a random field") {
  const TorusGrid g = TorusGrid::with_modes(3);
  std::mt19937_64 rng(8);
  const SpectralField f = random_real_field(g, rng, 1.0);
  const double c = 0.8;
  const SpectralField f2 = multiply_fields({f, f});
  const SpectralField f3 = multiply_fields({f, f, f});
  const SpectralField f4 = multiply_fields({f, f, f, f});
  SpectralField want = f4 - 6.0 * c * f2;
  want.at({0, 0, 0}) += 3.0 * c * c;
  CHECK(max_abs_diff(wick_power(f, 4, c), want) < 1e-11);
  CHECK(max_abs_diff(bold_W3(f, c), 4.0 * (f3 - 3.0 * c * f)) < 1e-11);
  SpectralField w2 = f2;
  w2.at({0, 0, 0}) -= c;
  CHECK(max_abs_diff(bold_W2(f, c), 12.0 * w2) < 1e-11);
  CHECK(max_abs_diff(bold_W2(SpectralField(g), 0.25), constant_field(g, -3.0)) < 1e-13);
}

TEST_CASE("smoothed Wick powers") {
  const TorusGrid g = TorusGrid::with_modes(2);
  const WickContext ctx(g);
  const double t = 2.5, ct = ctx.c_tilde(t);
  CHECK(max_abs(smoothed_wick(SpectralField(g), 5, t, ctx)) < 1e-15);
  std::mt19937_64 rng(2);
  const SpectralField f = random_real_field(g, rng, 0.5);
  const SpectralField h = apply_bracket_power(-0.5, f);
  const SpectralField h3 = multiply_fields({h, h, h});
  CHECK(max_abs_diff(smoothed_wick(f, 3, t, ctx), h3 - 3.0 * ct * h) < 1e-11);
  // degree 5 by untruncated direct convolution
  const SpectralField hh = direct_convolution(h, h);
  const SpectralField h5 = restrict_to(direct_convolution(hh, direct_convolution(hh, h)), g);
  const SpectralField want = h5 - 10.0 * ct * h3 + 15.0 * ct * ct * h;
  CHECK(max_abs_diff(smoothed_wick(f, 5, t, ctx), want) < 1e-10);
  CHECK_THROWS_AS(smoothed_wick(f, 4, t, ctx), std::invalid_argument);
  CHECK_NOTHROW(smoothed_wick(f, 4, t, ctx, -1, true));
}

TEST_CASE("potential_V") {
  const TorusGrid g = TorusGrid::with_modes(2);
  const WickContext ctx(g);
  const SpectralField zero(g);
  CHECK(potential_V(zero, 0.3, 5.0, 7.0) == doctest::Approx(2.1));
  std::mt19937_64 rng(4);
  const SpectralField f = random_real_field(g, rng, 1.0);
  CHECK(potential_V(f, 0.0, 5.0, 7.0) == 0.0);
  const double c = ctx.c(4.0);
  const double v = potential_V(f, 0.3, 6.0 * c, 3.0 * c * c);
  const double w = 0.3 * wick_power(f, 4, c, 0).mean().real();
  CHECK(std::abs(v - w) < 1e-10 * std::max(1.0, std::abs(w)));
  // direct quadrature of f^4 - a f^2 + b on a fine grid
  const PhysicalField x = to_physical(f, 16);
  double acc = 0.0;
  for (double y : x.values) acc += y * y * y * y - 2.0 * y * y;
  CHECK(potential_V(f, 1.0, 2.0, 0.5) == doctest::Approx(acc / double(x.values.size()) + 0.5));
  CHECK_THROWS_AS(potential_V(f, -1.0, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("Wick centering, orthogonality and the W^2 covariance identity (MC)") {
  const TorusGrid g = TorusGrid::with_modes(2);
  const WickContext ctx(g);
  const Symbols sym;
  const double T = 4.0, c = ctx.c(T);
  const int replicas = 10000, P = 8;
  const std::vector<int> lags = {0, 1, 3};
  std::vector<MeanAccumulator> m(5), cov(lags.size());
  MeanAccumulator ortho, bold2;
  for (int r = 0; r < replicas; ++r) {
    const SpectralField w = sample_terminal_field(g, sym, T, 12, r);
    for (int k = 2; k <= 4; ++k) m[k].add(wick_power(w, k, c, 0).mean().real());
    const SpectralField w2 = wick_power(w, 2, c), w3 = wick_power(w, 3, c);
    ortho.add(inner(w2, w3));
    bold2.add(bold_W2(w, c, 0).mean().real());
    const PhysicalField v = to_physical(w, P);
    std::vector<double> s(v.values.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = v.values[i] * v.values[i] - c;
    for (std::size_t l = 0; l < lags.size(); ++l) {
      double acc = 0.0;
      for (int a = 0; a < P; ++a)
        for (int b = 0; b < P * P; ++b) {
          const std::size_t i = std::size_t(a) * P * P + b;
          const std::size_t j = std::size_t((a + lags[l]) % P) * P * P + b;
          acc += s[i] * s[j];
        }
      cov[l].add(acc / double(s.size()));
    }
  }
  for (int k = 2; k <= 4; ++k) CHECK(std::abs(m[k].mean) < 3.0 * m[k].stderr_mean());
  CHECK(std::abs(ortho.mean) < 3.0 * ortho.stderr_mean());
  CHECK(std::abs(bold2.mean) < 3.0 * bold2.stderr_mean());
  for (std::size_t l = 0; l < lags.size(); ++l) {
    const double x = 2.0 * std::numbers::pi * lags[l] / P;
    double C = 0.0;
    for (std::size_t i = 0; i < g.mode_count(); ++i) {
      const Mode n = g.mode(i);
      const double r = sym.eval_rho(T, n);
      C += r * r / (1.0 + squared_norm(n)) * std::cos(n[0] * x);
    }
    CHECK(std::abs(cov[l].mean - 2.0 * C * C) < 3.0 * cov[l].stderr_mean());
  }
}
