#pragma once

#include <complex>
#include <span>
#include <vector>

#include "scalefield/grid.hpp"

namespace scalefield {

using Complex = std::complex<double>;

/// Fourier coefficients f^(n) of f(x) = sum_n f^(n) e^{i<n,x>} on the mode
/// cube of a TorusGrid. The spatial measure is normalized, so the integral
/// of f is f^(0) and the squared L2 norm is sum |f^(n)|^2.
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(const TorusGrid& grid);
  SpectralField(const TorusGrid& grid, std::vector<Complex> coeffs);

  const TorusGrid& grid() const noexcept { return grid_; }
  int n_max() const noexcept { return grid_.n_max(); }
  std::size_t size() const noexcept { return coeffs_.size(); }

  std::span<Complex> coeffs() noexcept { return coeffs_; }
  std::span<const Complex> coeffs() const noexcept { return coeffs_; }

  Complex& operator[](std::size_t i) noexcept { return coeffs_[i]; }
  const Complex& operator[](std::size_t i) const noexcept { return coeffs_[i]; }
  Complex& at(const Mode& n);
  const Complex& at(const Mode& n) const;

  /// Integral over the torus (the zero mode).
  Complex mean() const noexcept { return coeffs_[grid_.zero_index()]; }

  SpectralField& operator+=(const SpectralField& other);
  SpectralField& operator-=(const SpectralField& other);
  SpectralField& operator*=(double a) noexcept;
  SpectralField& operator*=(Complex a) noexcept;

  /// this += a * other where the mode cubes may differ; only shared modes
  /// are touched.
  void add_scaled(const SpectralField& other, double a);

  /// Copy onto a cube of the given cutoff, truncating or zero-extending.
  SpectralField resized(int n_max) const;

  void set_zero() noexcept;

  /// max |f(-n) - conj f(n)| / max |f(n)|, zero for the zero field.
  double hermitian_residual() const noexcept;
  /// Replace by the Hermitian part (f(n) + conj f(-n)) / 2.
  void make_hermitian() noexcept;

  bool all_finite() const noexcept;

 private:
  TorusGrid grid_;
  std::vector<Complex> coeffs_ = std::vector<Complex>(1);
};

SpectralField operator+(SpectralField a, const SpectralField& b);
SpectralField operator-(SpectralField a, const SpectralField& b);
SpectralField operator*(double s, SpectralField a);
SpectralField operator*(SpectralField a, double s);

/// sum |f^(n)|^2
double l2_norm_sq(const SpectralField& f) noexcept;
double l2_norm(const SpectralField& f) noexcept;

/// Real part of sum f^(n) conj g^(n) over shared modes; for real fields
/// this is the L2 pairing of f and g.
double inner(const SpectralField& f, const SpectralField& g) noexcept;

/// Throws std::invalid_argument unless both fields index the same modes.
void require_same_modes(const SpectralField& f, const SpectralField& g, const char* where);

/// Calls fn(i_dst, i_src) for every mode shared by two cubes of the same
/// dimension.
template <class Fn>
void for_each_shared_mode(const TorusGrid& dst, const TorusGrid& src, Fn&& fn) {
  const int n = std::min(dst.n_max(), src.n_max());
  const int ld = dst.side(), ls = src.side();
  const int od = dst.n_max() - n, os = src.n_max() - n;
  const int len = 2 * n + 1;
  if (dst.dim() == 2) {
    for (int a = 0; a < len; ++a) {
      const std::size_t bd = std::size_t(a + od) * ld + od;
      const std::size_t bs = std::size_t(a + os) * ls + os;
      for (int b = 0; b < len; ++b) fn(bd + b, bs + b);
    }
    return;
  }
  for (int a = 0; a < len; ++a) {
    for (int b = 0; b < len; ++b) {
      const std::size_t bd = (std::size_t(a + od) * ld + (b + od)) * ld + od;
      const std::size_t bs = (std::size_t(a + os) * ls + (b + os)) * ls + os;
      for (int c = 0; c < len; ++c) fn(bd + c, bs + c);
    }
  }
}

}  // namespace scalefield
