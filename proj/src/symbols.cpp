#include "scalefield/symbols.hpp"

#include <cmath>
#include <stdexcept>

namespace scalefield {

double smoothstep(double s) noexcept {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

double smoothstep_derivative(double s) noexcept {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  const double u = s * (1.0 - s);
  return 30.0 * u * u;
}

double Symbols::profile(double r) const noexcept {
  if (r <= p_.rho_plateau) return 1.0;
  if (r >= p_.rho_support) return 0.0;
  return smoothstep((p_.rho_support - r) / (p_.rho_support - p_.rho_plateau));
}

double Symbols::profile_derivative(double r) const noexcept {
  if (r <= p_.rho_plateau || r >= p_.rho_support) return 0.0;
  const double w = p_.rho_support - p_.rho_plateau;
  return -smoothstep_derivative((r - p_.rho_plateau) / w) / w;
}

double Symbols::rho(double t, double bracket_n) const noexcept {
  if (t <= 0.0) return 0.0;
  return profile(bracket_n / t);
}

double Symbols::sigma_sq(double t, double bracket_n) const noexcept {
  if (t <= 0.0) return 0.0;
  const double r = bracket_n / t;
  // d/dt rho(r)^2 = 2 rho(r) rho'(r) dr/dt with dr/dt = -r / t
  const double v = -2.0 * profile(r) * profile_derivative(r) * r / t;
  return v > 0.0 ? v : 0.0;
}

double Symbols::j_symbol(double t, double bracket_n) const noexcept {
  return std::sqrt(sigma_sq(t, bracket_n)) / bracket_n;
}

double Symbols::theta_tilde(double t, double radius_n) const noexcept {
  const double lo = p_.theta_inner * t, hi = p_.theta_outer * t;
  if (radius_n <= lo) return 1.0;
  if (radius_n >= hi) return 0.0;
  return smoothstep((hi - radius_n) / (hi - lo));
}

double Symbols::eta(double radius_n) const noexcept {
  if (radius_n <= p_.eta_inner) return 1.0;
  if (radius_n >= p_.eta_outer) return 0.0;
  return smoothstep((p_.eta_outer - radius_n) / (p_.eta_outer - p_.eta_inner));
}

double Symbols::zeta(double t) const noexcept {
  return smoothstep((t - p_.zeta_lo) / (p_.zeta_hi - p_.zeta_lo));
}

double Symbols::theta(double t, double radius_n) const noexcept {
  const double tt = theta_tilde(t, radius_n);
  if (tt == 0.0) return 0.0;
  const double e = eta(radius_n);
  return (1.0 - e) * tt + zeta(t) * e * tt;
}

namespace {
void check_scale(double t) {
  if (!(t > 0.0)) throw std::domain_error("scale t must be positive");
}
}  // namespace

double Symbols::eval_rho(double t, const Mode& n) const {
  check_scale(t);
  return rho(t, bracket(n));
}

double Symbols::eval_sigma_sq(double t, const Mode& n) const {
  check_scale(t);
  return sigma_sq(t, bracket(n));
}

double Symbols::eval_theta(double t, const Mode& n) const {
  check_scale(t);
  return theta(t, radius(n));
}

double Symbols::eval_j(double t, const Mode& n) const {
  check_scale(t);
  return j_symbol(t, bracket(n));
}

SpectralField apply_multiplier(std::span<const double> symbol, const SpectralField& f) {
  if (symbol.size() != f.size()) throw std::invalid_argument("apply_multiplier: grid mismatch");
  SpectralField out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] * symbol[i];
  return out;
}

SpectralField apply_j(const Symbols& symbols, double t, const SpectralField& f) {
  return apply_multiplier([&](const Mode& n) { return symbols.eval_j(t, n); }, f);
}

SpectralField apply_theta(const Symbols& symbols, double t, const SpectralField& f) {
  return apply_multiplier([&](const Mode& n) { return symbols.eval_theta(t, n); }, f);
}

SpectralField apply_bracket_power(double s, const SpectralField& f) {
  return apply_multiplier([s](const Mode& n) { return std::pow(bracket(n), s); }, f);
}

}  // namespace scalefield
