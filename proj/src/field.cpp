#include "scalefield/field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scalefield {

SpectralField::SpectralField(const TorusGrid& grid)
    : grid_(grid), coeffs_(grid.mode_count(), Complex(0.0, 0.0)) {}

SpectralField::SpectralField(const TorusGrid& grid, std::vector<Complex> coeffs)
    : grid_(grid), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != grid_.mode_count())
    throw std::invalid_argument("SpectralField: coefficient count does not match grid");
}

Complex& SpectralField::at(const Mode& n) {
  if (!grid_.contains(n)) throw std::out_of_range("SpectralField::at: mode outside grid");
  return coeffs_[grid_.index(n)];
}

const Complex& SpectralField::at(const Mode& n) const {
  if (!grid_.contains(n)) throw std::out_of_range("SpectralField::at: mode outside grid");
  return coeffs_[grid_.index(n)];
}

void require_same_modes(const SpectralField& f, const SpectralField& g, const char* where) {
  if (!f.grid().same_modes(g.grid()))
    throw std::invalid_argument(std::string(where) + ": grid mismatch (" + f.grid().describe() +
                                " vs " + g.grid().describe() + ")");
}

SpectralField& SpectralField::operator+=(const SpectralField& other) {
  require_same_modes(*this, other, "operator+=");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& other) {
  require_same_modes(*this, other, "operator-=");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator*=(double a) noexcept {
  for (auto& c : coeffs_) c *= a;
  return *this;
}

SpectralField& SpectralField::operator*=(Complex a) noexcept {
  for (auto& c : coeffs_) c *= a;
  return *this;
}

void SpectralField::add_scaled(const SpectralField& other, double a) {
  if (other.grid_.dim() != grid_.dim())
    throw std::invalid_argument("add_scaled: dimension mismatch");
  if (other.grid_.n_max() == grid_.n_max()) {
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += a * other.coeffs_[i];
    return;
  }
  for_each_shared_mode(grid_, other.grid_,
                       [&](std::size_t d, std::size_t s) { coeffs_[d] += a * other.coeffs_[s]; });
}

SpectralField SpectralField::resized(int n_max) const {
  if (n_max == grid_.n_max()) return *this;
  const int m = std::max(grid_.modes_per_axis(), 2 * n_max + 1);
  SpectralField out(TorusGrid(grid_.dim(), m, n_max, grid_.padding_factor()));
  for_each_shared_mode(out.grid_, grid_,
                       [&](std::size_t d, std::size_t s) { out.coeffs_[d] = coeffs_[s]; });
  return out;
}

void SpectralField::set_zero() noexcept { std::fill(coeffs_.begin(), coeffs_.end(), Complex(0.0)); }

double SpectralField::hermitian_residual() const noexcept {
  double scale = 0.0, worst = 0.0;
  const std::size_t n = coeffs_.size();
  for (std::size_t i = 0; i < n; ++i) {
    scale = std::max(scale, std::abs(coeffs_[i]));
    worst = std::max(worst, std::abs(coeffs_[n - 1 - i] - std::conj(coeffs_[i])));
  }
  return scale == 0.0 ? 0.0 : worst / scale;
}

void SpectralField::make_hermitian() noexcept {
  const std::size_t n = coeffs_.size();
  for (std::size_t i = 0; i <= (n - 1) / 2; ++i) {
    const std::size_t j = n - 1 - i;
    const Complex h = 0.5 * (coeffs_[i] + std::conj(coeffs_[j]));
    coeffs_[i] = h;
    coeffs_[j] = std::conj(h);
  }
}

bool SpectralField::all_finite() const noexcept {
  return std::all_of(coeffs_.begin(), coeffs_.end(), [](const Complex& c) {
    return std::isfinite(c.real()) && std::isfinite(c.imag());
  });
}

SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
SpectralField operator*(double s, SpectralField a) { return a *= s; }
SpectralField operator*(SpectralField a, double s) { return a *= s; }

double l2_norm_sq(const SpectralField& f) noexcept {
  double s = 0.0;
  for (const auto& c : f.coeffs()) s += std::norm(c);
  return s;
}

double l2_norm(const SpectralField& f) noexcept { return std::sqrt(l2_norm_sq(f)); }

double inner(const SpectralField& f, const SpectralField& g) noexcept {
  double s = 0.0;
  if (f.grid().same_modes(g.grid())) {
    for (std::size_t i = 0; i < f.size(); ++i)
      s += f[i].real() * g[i].real() + f[i].imag() * g[i].imag();
    return s;
  }
  for_each_shared_mode(f.grid(), g.grid(), [&](std::size_t a, std::size_t b) {
    s += f[a].real() * g[b].real() + f[a].imag() * g[b].imag();
  });
  return s;
}

}  // namespace scalefield
