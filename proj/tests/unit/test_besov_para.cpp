#include <doctest.h>

#include <cmath>
#include <random>

#include "scalefield/besov.hpp"
#include "scalefield/transform.hpp"
#include "test_support.hpp"

using namespace scalefield;
using namespace scalefield::testing;

namespace {

// Block weights evaluated from the defining formulas, independent of the
// library's partition tables.
double chi_ref(double r) {
  if (r <= 0.9) return 1.0;
  if (r >= 1.2) return 0.0;
  const double s = (r - 0.9) / 0.3;
  return 1.0 - (10 * s * s * s - 15 * s * s * s * s + 6 * s * s * s * s * s);
}

double block_ref(int j, double r) {
  if (j < 0) return chi_ref(r);
  const double x = r / std::pow(2.0, j);
  return chi_ref(x / 2) - chi_ref(x);
}

SpectralField block_direct(int j, const SpectralField& f) {
  SpectralField out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] * block_ref(j, radius(f.grid().mode(i)));
  return out;
}

int blocks_needed(const TorusGrid& g) {
  const double r = std::sqrt(double(g.dim())) * g.n_max();
  int j = -1;
  while (0.9 * std::pow(2.0, j + 1) < r) ++j;
  return j;
}

SpectralField truncated_product(const SpectralField& a, const SpectralField& b) {
  return restrict_to(direct_convolution(a, b), a.grid());
}

// Bony pieces by explicit double sum over block pairs.
SpectralField paraproduct_direct(const SpectralField& f, const SpectralField& g,
                                 ParaproductMode mode) {
  const int jm = blocks_needed(f.grid());
  SpectralField out(f.grid());
  for (int i = -1; i <= jm; ++i)
    for (int j = -1; j <= jm; ++j) {
      const bool take = (mode == ParaproductMode::greater && j < i - 1) ||
                        (mode == ParaproductMode::less && j > i + 1) ||
                        (mode == ParaproductMode::resonant && std::abs(i - j) <= 1);
      if (take) out += truncated_product(block_direct(i, f), block_direct(j, g));
    }
  return out;
}

double rel_l2(const SpectralField& a, const SpectralField& b) {
  return l2_norm(a - b) / std::max(l2_norm(b), 1e-300);
}

}  // namespace

TEST_CASE("partition of unity and disjoint supports") {
  for (auto g : {TorusGrid(3, 5, 2), TorusGrid(3, 17, 8), TorusGrid(3, 33, 16), TorusGrid(2, 81, 40)}) {
    const BlockPartition part(g);
    CHECK(part.partition_residual() < 1e-12);
    CHECK(part.j_max() == blocks_needed(g));
    for (int i = -1; i <= part.j_max(); ++i)
      for (int j = i + 2; j <= part.j_max(); ++j) {
        const auto a = part.block(i), b = part.block(j);
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] * b[k] == 0.0);
      }
    // top block is non-empty
    double top = 0.0;
    for (double w : part.block(part.j_max())) top = std::max(top, w);
    CHECK(top > 0.0);
  }
}

TEST_CASE("blocks match the defining formulas") {
  const TorusGrid g(3, 17, 8);
  const BlockPartition part(g);
  for (int j = -1; j <= part.j_max(); ++j)
    for (std::size_t i = 0; i < g.mode_count(); ++i)
      CHECK(part.weight(j, i) == doctest::Approx(block_ref(j, radius(g.mode(i)))).epsilon(1e-13));
}

TEST_CASE("lp blocks isolate annuli and sum to the field") {
  std::mt19937_64 rng(1);
  const TorusGrid g(3, 17, 8);
  const SpectralField single = single_mode(g, {5, 0, 0});
  CHECK(max_abs_diff(lp_block(2, single), single) == 0.0);
  for (int j : {-1, 0}) CHECK(max_abs(lp_block(j, single)) == 0.0);

  const SpectralField f = random_real_field(g, rng);
  SpectralField sum(g);
  for (int j = -1; j <= BlockPartition::of(g)->j_max(); ++j) sum += lp_block(j, f);
  CHECK(max_abs_diff(sum, f) < 1e-12 * max_abs(f));

  const SpectralField c = single_mode(g, {0, 0, 0}, 3.0);
  CHECK(max_abs_diff(lp_block(-1, c), c) == 0.0);
  CHECK_THROWS_AS(lp_block(9, f), std::out_of_range);
}

TEST_CASE("besov norm basics") {
  std::mt19937_64 rng(2);
  const TorusGrid g(3, 17, 8);
  CHECK(besov_norm(SpectralField(g), 0.5, 2, 2) == 0.0);

  const SpectralField single = single_mode(g, {5, 0, 0}, Complex(0.3, -0.2));
  for (double s : {-0.7, 0.0, 1.5})
    for (double p : {1.0, 2.0, 4.0, kInfinity})
      CHECK(besov_norm(single, s, p, 2.0) ==
            doctest::Approx(std::pow(2.0, 2 * s) * lp_norm(single, p)).epsilon(1e-12));

  for (int trial = 0; trial < 10; ++trial) {
    const SpectralField f = random_real_field(g, rng, 1.0);
    for (double s : {-0.6, 0.3})
      for (double p : {2.0, kInfinity}) {
        const double n1 = besov_norm(f, s, p, 1.0), n2 = besov_norm(f, s, p, 2.0);
        const double n4 = besov_norm(f, s, p, 4.0), ninf = besov_norm(f, s, p, kInfinity);
        CHECK(n2 <= n1);
        CHECK(n4 <= n2);
        CHECK(ninf <= n4);
        CHECK(besov_norm(-2.5 * f, s, p, 2.0) == doctest::Approx(2.5 * n2).epsilon(1e-12));
      }
  }
}

TEST_CASE("sobolev norm") {
  std::mt19937_64 rng(3);
  const TorusGrid g(3, 17, 8);
  const SpectralField f = random_real_field(g, rng);
  CHECK(sobolev_norm(f, 0.0, 3.0) == doctest::Approx(lp_norm(f, 3.0)).epsilon(1e-14));
  const Mode n{2, -1, 3};
  const SpectralField unit = single_mode(g, n, Complex(1.0 / std::sqrt(2.0), 0.0));
  for (double s : {-1.0, 0.5, 2.0})
    CHECK(sobolev_norm(unit, s, 2.0) == doctest::Approx(std::pow(bracket(n), s)).epsilon(1e-12));
}

TEST_CASE("Sobolev and Besov 2,2 norms agree on band-limited random fields") {
  std::mt19937_64 rng(4);
  const TorusGrid g(3, 17, 8);
  const int jm = blocks_needed(g);
  for (double alpha : {-0.5, 0.0, 0.5}) {
    // Per-mode equivalence constants: ||f||_B^2 / ||f||_H^2 is a weighted
    // average of sum_j 2^{2 j alpha} phi_j(n)^2 / <n>^{2 alpha}.
    double lo = 1e300, hi = 0.0;
    for (std::size_t i = 0; i < g.mode_count(); ++i) {
      const Mode n = g.mode(i);
      double w = 0.0;
      for (int j = -1; j <= jm; ++j) w += std::pow(2.0, 2 * j * alpha) * std::pow(block_ref(j, radius(n)), 2);
      w /= std::pow(bracket(n), 2 * alpha);
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
    for (double decay : {0.0, 1.0, 2.0})
      for (int trial = 0; trial < 4; ++trial) {
        const SpectralField f = random_real_field(g, rng, decay);
        const double ratio = besov_norm(f, alpha, 2.0, 2.0) / sobolev_norm(f, alpha, 2.0);
        INFO("alpha=" << alpha << " decay=" << decay << " ratio=" << ratio);
        CHECK(ratio >= std::sqrt(lo) * (1 - 1e-12));
        CHECK(ratio <= std::sqrt(hi) * (1 + 1e-12));
        if (alpha == 0.0) CHECK(std::abs(ratio - 1.0) < 0.10);
      }
  }
}

TEST_CASE("paraproduct trichotomy and bilinearity") {
  std::mt19937_64 rng(5);
  const TorusGrid g(3, 17, 8);
  CHECK(max_abs(paraproduct(SpectralField(g), random_real_field(g, rng), ParaproductMode::less)) == 0.0);
  for (int trial = 0; trial < 10; ++trial) {
    const SpectralField f = random_real_field(g, rng, 0.5), h = random_real_field(g, rng, 1.0);
    const SpectralField sum = paraproduct(f, h, ParaproductMode::less) +
                              paraproduct(f, h, ParaproductMode::resonant) +
                              paraproduct(f, h, ParaproductMode::greater);
    CHECK(rel_l2(sum, multiply_fields({f, h})) < 1e-10);
  }
  const SpectralField f = random_real_field(g, rng), a = random_real_field(g, rng);
  const SpectralField b = random_real_field(g, rng);
  for (auto mode : {ParaproductMode::less, ParaproductMode::greater, ParaproductMode::resonant}) {
    const SpectralField lhs = paraproduct(f, 2.0 * a + (-0.5) * b, mode);
    const SpectralField rhs = 2.0 * paraproduct(f, a, mode) + (-0.5) * paraproduct(f, b, mode);
    CHECK(rel_l2(lhs, rhs) < 1e-12);
    CHECK(lhs.hermitian_residual() < 1e-12);
  }
}

TEST_CASE("paraproduct block-pair enumeration") {
  const TorusGrid g(2, 81, 40);
  const SpectralField low = single_mode(g, {1, 1, 0}, Complex(0.7, 0.1));
  const SpectralField high = single_mode(g, {40, 0, 0}, Complex(-0.3, 0.4));
  CHECK(max_abs(lp_block(0, low) - low) == 0.0);
  CHECK(max_abs(lp_block(5, high) - high) == 0.0);
  const SpectralField prod = multiply_fields({low, high});
  CHECK(max_abs_diff(paraproduct(low, high, ParaproductMode::less), prod) < 1e-14);
  CHECK(max_abs(paraproduct(low, high, ParaproductMode::greater)) < 1e-15);
  CHECK(max_abs(paraproduct(low, high, ParaproductMode::resonant)) < 1e-15);
}

TEST_CASE("paraproducts match explicit block sums") {
  std::mt19937_64 rng(6);
  const TorusGrid g(3, 9, 4);
  const SpectralField f = random_real_field(g, rng), h = random_real_field(g, rng);
  for (auto mode : {ParaproductMode::less, ParaproductMode::greater, ParaproductMode::resonant})
    CHECK(rel_l2(paraproduct(f, h, mode), paraproduct_direct(f, h, mode)) < 1e-11);
}

TEST_CASE("truncated paraproducts across cube sizes") {
  std::mt19937_64 rng(7);
  const TorusGrid g(3, 17, 8);
  const SpectralField f = random_real_field(g, rng);
  const SpectralField small = random_real_field(g.with_cutoff(3), rng);
  const SpectralField full = paraproduct(f, small.resized(8), ParaproductMode::greater);
  const SpectralField part = paraproduct(f, small, ParaproductMode::greater, 5);
  CHECK(max_abs_diff(part, full.resized(5)) < 1e-12 * max_abs(full));
}

TEST_CASE("greater-paraproduct adjoint") {
  std::mt19937_64 rng(8);
  const TorusGrid g(3, 17, 8);
  const SpectralField f = random_real_field(g, rng);
  const SpectralField u = random_real_field(g.with_cutoff(5), rng);
  const SpectralField h = random_real_field(g.with_cutoff(6), rng);
  const double lhs = inner(h, paraproduct(f, u, ParaproductMode::greater, 6));
  const double rhs = inner(paraproduct_greater_adjoint(f, h, 5), u);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
}

TEST_CASE("commutator") {
  std::mt19937_64 rng(9);
  const TorusGrid g(3, 5, 2);
  const SpectralField f = random_real_field(g, rng), a = random_real_field(g, rng);
  const SpectralField h = random_real_field(g, rng);
  CHECK(max_abs(commutator(SpectralField(g), a, h)) == 0.0);
  CHECK(max_abs(commutator(f, SpectralField(g), h)) == 0.0);
  CHECK(max_abs(commutator(f, a, SpectralField(g))) == 0.0);

  const SpectralField c = commutator(f, a, h);
  const SpectralField scaled = commutator(2.0 * f, -3.0 * a, 0.5 * h);
  CHECK(max_abs_diff(scaled, -3.0 * c) < 1e-12 * max_abs(c));

  const SpectralField direct =
      paraproduct_direct(paraproduct_direct(f, a, ParaproductMode::greater), h,
                         ParaproductMode::resonant) -
      truncated_product(a, paraproduct_direct(f, h, ParaproductMode::resonant));
  CHECK(max_abs_diff(c, direct) < 1e-10 * max_abs(direct));
}
