#include "scalefield/besov.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "scalefield/symbols.hpp"
#include "scalefield/transform.hpp"

namespace scalefield {

namespace {

constexpr double kChiPlateau = 0.9;
constexpr double kChiSupport = 1.2;

SpectralField masked(const SpectralField& f, std::span<const double> w) {
  SpectralField out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] * w[i];
  return out;
}

bool is_zero(const SpectralField& f) {
  return std::all_of(f.coeffs().begin(), f.coeffs().end(),
                     [](const Complex& c) { return c == Complex(0.0); });
}

int product_points(int n_a, int n_b, int n_out) {
  return std::max(alias_free_size(n_a + n_b, n_out),
                  fft_friendly_size(2 * std::max({n_a, n_b, n_out}) + 1));
}

double max_radius(const TorusGrid& g) { return std::sqrt(double(g.dim())) * g.n_max(); }

}  // namespace

double BlockPartition::chi(double r) noexcept {
  if (r <= kChiPlateau) return 1.0;
  if (r >= kChiSupport) return 0.0;
  return smoothstep((kChiSupport - r) / (kChiSupport - kChiPlateau));
}

double BlockPartition::phi(double r) noexcept { return chi(0.5 * r) - chi(r); }

int BlockPartition::j_max_for(double r) noexcept {
  int j = -1;
  while (kChiPlateau * std::ldexp(1.0, j + 1) < r) ++j;
  return j;
}

BlockPartition::BlockPartition(const TorusGrid& grid) : grid_(grid) {
  j_max_ = j_max_for(max_radius(grid));
  const std::size_t n = grid.mode_count();
  const int blocks = block_count();
  weights_.assign(std::size_t(blocks) * n, 0.0);
  std::vector<double> raw(static_cast<std::size_t>(blocks));
  for (std::size_t i = 0; i < n; ++i) {
    const double r = radius(grid.mode(i));
    double sum = 0.0;
    for (int j = -1; j <= j_max_; ++j) {
      raw[j + 1] = j < 0 ? chi(r) : phi(std::ldexp(r, -j));
      sum += raw[j + 1];
    }
    for (int j = -1; j <= j_max_; ++j) weights_[std::size_t(j + 1) * n + i] = raw[j + 1] / sum;
  }
}

std::shared_ptr<const BlockPartition> BlockPartition::of(const TorusGrid& grid) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const BlockPartition>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{grid.dim(), grid.n_max()}];
  if (!slot) slot = std::make_shared<const BlockPartition>(grid);
  return slot;
}

std::span<const double> BlockPartition::block(int j) const {
  if (j < -1 || j > j_max_) throw std::out_of_range("BlockPartition::block: index out of range");
  const std::size_t n = grid_.mode_count();
  return {weights_.data() + std::size_t(j + 1) * n, n};
}

std::vector<double> BlockPartition::low_pass(int j) const {
  std::vector<double> w(grid_.mode_count(), 0.0);
  for (int i = -1; i <= std::min(j, j_max_); ++i) {
    const auto b = block(i);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += b[k];
  }
  return w;
}

double BlockPartition::partition_residual() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < grid_.mode_count(); ++k) {
    double s = 0.0;
    for (int j = -1; j <= j_max_; ++j) s += weights_[std::size_t(j + 1) * grid_.mode_count() + k];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

SpectralField lp_block(int j, const SpectralField& f) {
  const auto part = BlockPartition::of(f.grid());
  if (j > part->j_max()) throw std::out_of_range("lp_block: j exceeds j_max of the grid");
  return masked(f, part->block(j));
}

SpectralField lp_low_pass(int j, const SpectralField& f) {
  return masked(f, BlockPartition::of(f.grid())->low_pass(j));
}

double lp_norm(const SpectralField& f, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1");
  const std::vector<double> v = inverse_transform(f);
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x), p);
  return std::pow(s / double(v.size()), 1.0 / p);
}

double besov_norm(const SpectralField& f, double s, double p, double q) {
  if (!(q >= 1.0)) throw std::invalid_argument("besov_norm: q must be >= 1");
  const auto part = BlockPartition::of(f.grid());
  double acc = 0.0;
  for (int j = -1; j <= part->j_max(); ++j) {
    const double term = std::pow(2.0, j * s) * lp_norm(masked(f, part->block(j)), p);
    if (std::isinf(q))
      acc = std::max(acc, term);
    else
      acc += std::pow(term, q);
  }
  return std::isinf(q) ? acc : std::pow(acc, 1.0 / q);
}

double sobolev_norm(const SpectralField& f, double s, double p) {
  return lp_norm(s == 0.0 ? f : apply_bracket_power(s, f), p);
}

namespace {

// sum over i of Delta_i a * S_{i-2} b, truncated to out_n_max.
SpectralField greater_impl(const SpectralField& a, const SpectralField& b,
                           const TorusGrid& out_grid) {
  const int out_n_max = out_grid.n_max();
  const auto pa = BlockPartition::of(a.grid());
  const auto pb = BlockPartition::of(b.grid());
  const int p = product_points(a.n_max(), b.n_max(), out_n_max);
  const double out_radius = max_radius(out_grid);
  PhysicalField acc{a.grid().dim(), p, {}};
  PhysicalField low{a.grid().dim(), p, {}};
  int low_through = -2;  // low holds S_{low_through} b
  for (int i = 1; i <= pa->j_max(); ++i) {
    // Delta_i a * S_{i-2} b has frequencies |xi| >= 0.6 * 2^i.
    if (0.6 * std::ldexp(1.0, i) >= out_radius) break;
    const SpectralField ai = masked(a, pa->block(i));
    if (is_zero(ai)) continue;
    while (low_through < std::min(i - 2, pb->j_max())) {
      ++low_through;
      const SpectralField bj = masked(b, pb->block(low_through));
      if (is_zero(bj)) continue;
      PhysicalField v = to_physical(bj, p);
      if (low.values.empty())
        low = std::move(v);
      else
        for (std::size_t k = 0; k < v.values.size(); ++k) low.values[k] += v.values[k];
    }
    if (low.values.empty()) continue;
    const PhysicalField va = to_physical(ai, p);
    if (acc.values.empty()) acc.values.assign(va.values.size(), 0.0);
    for (std::size_t k = 0; k < va.values.size(); ++k) acc.values[k] += va.values[k] * low.values[k];
  }
  if (acc.values.empty()) return SpectralField(out_grid);
  return to_spectral(acc, out_grid);
}

SpectralField resonant_impl(const SpectralField& a, const SpectralField& b,
                            const TorusGrid& out_grid) {
  const int out_n_max = out_grid.n_max();
  const auto pa = BlockPartition::of(a.grid());
  const auto pb = BlockPartition::of(b.grid());
  const int p = product_points(a.n_max(), b.n_max(), out_n_max);
  PhysicalField acc{a.grid().dim(), p, {}};
  const int top = std::min(pa->j_max(), pb->j_max() + 1);
  for (int i = -1; i <= top; ++i) {
    const SpectralField ai = masked(a, pa->block(i));
    if (is_zero(ai)) continue;
    std::vector<double> w(b.size(), 0.0);
    for (int j = std::max(-1, i - 1); j <= std::min(pb->j_max(), i + 1); ++j) {
      const auto bj = pb->block(j);
      for (std::size_t k = 0; k < w.size(); ++k) w[k] += bj[k];
    }
    const SpectralField bi = masked(b, w);
    if (is_zero(bi)) continue;
    const PhysicalField va = to_physical(ai, p);
    const PhysicalField vb = to_physical(bi, p);
    if (acc.values.empty()) acc.values.assign(va.values.size(), 0.0);
    for (std::size_t k = 0; k < va.values.size(); ++k) acc.values[k] += va.values[k] * vb.values[k];
  }
  if (acc.values.empty()) return SpectralField(out_grid);
  return to_spectral(acc, out_grid);
}

}  // namespace

SpectralField paraproduct(const SpectralField& f, const SpectralField& g, ParaproductMode mode) {
  require_same_modes(f, g, "paraproduct");
  return paraproduct(f, g, mode, f.n_max());
}

SpectralField paraproduct(const SpectralField& f, const SpectralField& g, ParaproductMode mode,
                          int out_n_max) {
  if (f.grid().dim() != g.grid().dim()) throw std::invalid_argument("paraproduct: dimension mismatch");
  const TorusGrid out_grid = grid_with_cutoff(f.grid(), out_n_max);
  switch (mode) {
    case ParaproductMode::greater:
      return greater_impl(f, g, out_grid);
    case ParaproductMode::less:
      return greater_impl(g, f, out_grid);
    case ParaproductMode::resonant:
      return resonant_impl(f, g, out_grid);
  }
  throw std::invalid_argument("paraproduct: unknown mode");
}

SpectralField paraproduct_greater_adjoint(const SpectralField& f, const SpectralField& h,
                                          int g_n_max) {
  if (f.grid().dim() != h.grid().dim())
    throw std::invalid_argument("paraproduct_greater_adjoint: dimension mismatch");
  const TorusGrid g_grid = grid_with_cutoff(f.grid(), g_n_max);
  const auto pf = BlockPartition::of(f.grid());
  const auto pg = BlockPartition::of(g_grid);
  SpectralField out(g_grid);
  const int p = product_points(f.n_max(), h.n_max(), g_n_max);
  PhysicalField vh;
  for (int i = 1; i <= pf->j_max(); ++i) {
    if (i - 2 < -1) continue;
    const SpectralField fi = masked(f, pf->block(i));
    if (is_zero(fi)) continue;
    if (vh.values.empty()) vh = to_physical(h, p);
    PhysicalField v = to_physical(fi, p);
    for (std::size_t k = 0; k < v.values.size(); ++k) v.values[k] *= vh.values[k];
    const SpectralField prod = to_spectral(v, g_grid);
    const std::vector<double> low = pg->low_pass(i - 2);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += prod[k] * low[k];
  }
  return out;
}

SpectralField commutator(const SpectralField& f, const SpectralField& g, const SpectralField& h) {
  require_same_modes(f, g, "commutator");
  require_same_modes(f, h, "commutator");
  const SpectralField left =
      paraproduct(paraproduct(f, g, ParaproductMode::greater), h, ParaproductMode::resonant);
  const SpectralField fh = paraproduct(f, h, ParaproductMode::resonant);
  const SpectralField right = multiply_fields({g, fh});
  return left - right;
}

}  // namespace scalefield
