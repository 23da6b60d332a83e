#include "scalefield/wick.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "scalefield/transform.hpp"

namespace scalefield {

WickContext::WickContext(const TorusGrid& grid, Symbols symbols)
    : grid_(grid), symbols_(symbols) {
  std::map<long, double> shells;
  for (std::size_t i = 0; i < grid.mode_count(); ++i) shells[long(squared_norm(grid.mode(i)))] += 1.0;
  for (const auto& [n2, count] : shells) {
    shells_.push_back(n2);
    multiplicity_.push_back(count);
  }
}

template <class Fn>
double WickContext::sum_shells(Fn&& term) const {
  double s = 0.0;
  for (std::size_t i = 0; i < shells_.size(); ++i) {
    const double n2 = double(shells_[i]);
    s += multiplicity_[i] * term(std::sqrt(1.0 + n2), std::sqrt(n2));
  }
  return s;
}

double WickContext::c(double t) const {
  if (!(t > 0.0)) return 0.0;
  return sum_shells([&](double b, double) {
    const double r = symbols_.rho(t, b);
    return r * r / (b * b);
  });
}

double WickContext::c_tilde(double t) const {
  if (!(t > 0.0)) return 0.0;
  return sum_shells([&](double b, double) {
    const double r = symbols_.rho(t, b);
    return r * r / (b * b * b);
  });
}

double WickContext::c_theta(double T) const {
  if (!(T > 0.0)) return 0.0;
  return sum_shells([&](double b, double radius) {
    const double th = symbols_.theta(T, radius);
    return th * th / (b * b);
  });
}

double WickContext::c_theta_t(double T, double t) const {
  if (!(T > 0.0) || !(t > 0.0)) return 0.0;
  return sum_shells([&](double b, double radius) {
    const double th = symbols_.theta(T, radius);
    const double r = symbols_.rho(t, b);
    return th * th * r * r / (b * b);
  });
}

double wick_polynomial(int m, double x, double c) noexcept {
  if (m <= 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int k = 1; k < m; ++k) {
    const double next = x * cur - k * c * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

SpectralField wick_power(const SpectralField& f, int m, double c, int out_n_max) {
  if (m < 1 || m > 4) throw std::invalid_argument("wick_power: m must be in 1..4");
  if (!(c >= 0.0)) throw std::invalid_argument("wick_power: variance must be >= 0");
  const int out = out_n_max < 0 ? f.n_max() : out_n_max;
  return map_pointwise(f, m, out, [m, c](double x) { return wick_polynomial(m, x, c); });
}

SpectralField bold_W2(const SpectralField& f, double c, int out_n_max) {
  SpectralField w = wick_power(f, 2, c, out_n_max);
  w *= 12.0;
  return w;
}

SpectralField bold_W3(const SpectralField& f, double c, int out_n_max) {
  SpectralField w = wick_power(f, 3, c, out_n_max);
  w *= 4.0;
  return w;
}

SpectralField smoothed_wick(const SpectralField& f, int m, double t, const WickContext& ctx,
                            int out_n_max, bool allow_even) {
  if (m < 1) throw std::invalid_argument("smoothed_wick: m must be >= 1");
  if (m % 2 == 0 && !allow_even) throw std::invalid_argument("smoothed_wick: m must be odd");
  const double c = ctx.c_tilde(t);
  const SpectralField g = apply_bracket_power(-0.5, f);
  const int out = out_n_max < 0 ? f.n_max() : out_n_max;
  return map_pointwise(g, m, out, [m, c](double x) { return wick_polynomial(m, x, c); });
}

double potential_V(const SpectralField& f, double lambda, double a, double b) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("potential_V: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  const SpectralField mean =
      map_pointwise(f, 4, 0, [a](double x) { return x * x * (x * x - a); });
  return lambda * (mean.mean().real() + b);
}

Counterterms default_counterterms(double T, double lambda, const WickContext& ctx, double gamma) {
  const double c = ctx.c(T);
  return {6.0 * c + lambda * gamma, 3.0 * c * c};
}

}  // namespace scalefield
