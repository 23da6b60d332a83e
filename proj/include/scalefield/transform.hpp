#pragma once

#include <algorithm>
#include <array>
#include <tuple>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "scalefield/field.hpp"

namespace scalefield {

/// Samples on the P^dim nodes x_j = 2 pi j / P, row-major.
struct PhysicalField {
  int dim = 3;
  int points_per_axis = 1;
  std::vector<double> values;
};

enum class ProductMode {
  dealiased,  ///< zero-padded, exact on the retained modes
  aliased,    ///< evaluated on the grid's own M nodes
};

/// Samples of a Hermitian field on the grid's own M^dim nodes. A field that
/// is not Hermitian is evaluated in full and its real part returned.
std::vector<double> inverse_transform(const SpectralField& f);

/// Coefficients of M^dim real samples on the grid's modes.
SpectralField forward_transform(std::span<const double> values, const TorusGrid& grid);

/// Evaluate a Hermitian field on P^dim nodes; requires P >= 2 n_max + 1.
PhysicalField to_physical(const SpectralField& f, int points_per_axis);

/// Project real samples onto the modes of `grid`; requires P >= 2 n_max + 1.
SpectralField to_spectral(const PhysicalField& v, const TorusGrid& grid);

/// Complex counterparts for fields without Hermitian symmetry.
std::vector<Complex> to_physical_complex(const SpectralField& f, int points_per_axis);
SpectralField to_spectral_complex(std::span<const Complex> values, int points_per_axis,
                                  const TorusGrid& grid);

/// Node count per axis for an exact product whose factors have cutoffs
/// summing to `input_cutoff_sum`, truncated to `output_cutoff`.
int alias_free_size(int input_cutoff_sum, int output_cutoff);

/// Grid with the same M and padding as `like` but the given cutoff,
/// enlarging M if needed.
TorusGrid grid_with_cutoff(const TorusGrid& like, int n_max);

using FieldRef = std::reference_wrapper<const SpectralField>;

/// Pointwise product truncated to the common grid. In dealiased mode the
/// number of factors may not exceed the grid's padding factor.
SpectralField multiply_fields(std::initializer_list<FieldRef> factors,
                              ProductMode mode = ProductMode::dealiased);
SpectralField multiply_fields(std::span<const FieldRef> factors,
                              ProductMode mode = ProductMode::dealiased);

/// Apply fn(x) at every node to a real field; fn must be a polynomial of at
/// most `degree` so that the result on modes |n_i| <= out_n_max is exact.
template <class Fn>
SpectralField map_pointwise(const SpectralField& f, int degree, int out_n_max, Fn&& fn) {
  const int p = std::max(alias_free_size(degree * f.n_max(), out_n_max),
                         fft_friendly_size(2 * std::max(f.n_max(), out_n_max) + 1));
  PhysicalField v = to_physical(f, p);
  for (double& x : v.values) x = fn(x);
  return to_spectral(v, grid_with_cutoff(f.grid(), out_n_max));
}

/// fn(x_0, ..., x_{K-1}) at every node for K real fields with possibly
/// different cutoffs; fn must be a polynomial of total degree <= `degree`.
template <std::size_t K, class Fn>
SpectralField combine_pointwise(const std::array<FieldRef, K>& fields, int degree, int out_n_max,
                                Fn&& fn) {
  int n = 0;
  for (const auto& f : fields) n = std::max(n, f.get().n_max());
  const int p = std::max(alias_free_size(degree * n, out_n_max),
                         fft_friendly_size(2 * std::max(n, out_n_max) + 1));
  std::array<PhysicalField, K> v;
  for (std::size_t i = 0; i < K; ++i) v[i] = to_physical(fields[i].get(), p);
  PhysicalField out{v[0].dim, p, std::vector<double>(v[0].values.size())};
  std::array<double, K> x;
  for (std::size_t j = 0; j < out.values.size(); ++j) {
    for (std::size_t i = 0; i < K; ++i) x[i] = v[i].values[j];
    out.values[j] = std::apply(fn, x);
  }
  return to_spectral(out, grid_with_cutoff(fields[0].get().grid(), out_n_max));
}

/// Pointwise product of real fields a and b (possibly different cutoffs),
/// truncated to modes |n_i| <= out_n_max.
SpectralField product_truncated(const SpectralField& a, const SpectralField& b, int out_n_max);

/// Number of worker-local FFT plans created so far (diagnostics).
std::size_t fft_plan_count();

}  // namespace scalefield
