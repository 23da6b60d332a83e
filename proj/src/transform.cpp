#include "scalefield/transform.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace scalefield {

namespace {

enum class PlanKind { r2c, c2r, c2c_forward, c2c_backward };

// FFTW planning is not thread-safe; execution through the new-array
// interface is. Plans are created once under the lock and reused.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(PlanKind kind, int dim, int p) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(kind, dim, p);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    int n[3] = {p, p, p};
    std::size_t total = 1;
    for (int d = 0; d < dim; ++d) total *= std::size_t(p);
    const std::size_t half = total / std::size_t(p) * std::size_t(p / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    switch (kind) {
      case PlanKind::r2c: {
        auto* in = fftw_alloc_real(total);
        auto* out = fftw_alloc_complex(half);
        plan = fftw_plan_dft_r2c(dim, n, in, out, flags);
        fftw_free(in);
        fftw_free(out);
        break;
      }
      case PlanKind::c2r: {
        auto* in = fftw_alloc_complex(half);
        auto* out = fftw_alloc_real(total);
        plan = fftw_plan_dft_c2r(dim, n, in, out, flags);
        fftw_free(in);
        fftw_free(out);
        break;
      }
      case PlanKind::c2c_forward:
      case PlanKind::c2c_backward: {
        auto* in = fftw_alloc_complex(total);
        auto* out = fftw_alloc_complex(total);
        plan = fftw_plan_dft(dim, n, in, out,
                             kind == PlanKind::c2c_forward ? FFTW_FORWARD : FFTW_BACKWARD, flags);
        fftw_free(in);
        fftw_free(out);
        break;
      }
    }
    if (!plan) throw std::runtime_error("FFTW plan creation failed");
    plans_.emplace(key, plan);
    return plan;
  }

  std::size_t size() {
    std::lock_guard lock(mutex_);
    return plans_.size();
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<PlanKind, int, int>, fftw_plan> plans_;
};

std::size_t volume(int dim, int p) {
  std::size_t s = 1;
  for (int d = 0; d < dim; ++d) s *= std::size_t(p);
  return s;
}

inline int wrap(int k, int p) { return k < 0 ? k + p : k; }

void check_points(const SpectralField& f, int p, const char* where) {
  if (p < 2 * f.n_max() + 1)
    throw std::invalid_argument(std::string(where) + ": physical grid too small for mode cube");
}

constexpr double kHermitianTolerance = 1e-12;

}  // namespace

TorusGrid grid_with_cutoff(const TorusGrid& like, int n_max) {
  if (n_max == like.n_max()) return like;
  return TorusGrid(like.dim(), std::max(like.modes_per_axis(), 2 * n_max + 1), n_max,
                   like.padding_factor());
}

int alias_free_size(int input_cutoff_sum, int output_cutoff) {
  return fft_friendly_size(input_cutoff_sum + output_cutoff + 1);
}

PhysicalField to_physical(const SpectralField& f, int p) {
  check_points(f, p, "to_physical");
  const TorusGrid& g = f.grid();
  const int dim = g.dim(), n = g.n_max(), h = p / 2 + 1;
  const std::size_t total = volume(dim, p);
  std::vector<Complex> half(total / std::size_t(p) * std::size_t(h), Complex(0.0));
  const int side = g.side();
  if (dim == 2) {
    for (int a = -n; a <= n; ++a) {
      const std::size_t row = std::size_t(wrap(a, p)) * h;
      const std::size_t src = std::size_t(a + n) * side + n;
      for (int b = 0; b <= n; ++b) half[row + b] = f[src + b];
    }
  } else {
    for (int a = -n; a <= n; ++a) {
      for (int b = -n; b <= n; ++b) {
        const std::size_t row = (std::size_t(wrap(a, p)) * p + wrap(b, p)) * h;
        const std::size_t src = (std::size_t(a + n) * side + (b + n)) * side + n;
        for (int c = 0; c <= n; ++c) half[row + c] = f[src + c];
      }
    }
  }
  PhysicalField out{dim, p, std::vector<double>(total)};
  fftw_plan plan = PlanCache::instance().get(PlanKind::c2r, dim, p);
  fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(half.data()), out.values.data());
  return out;
}

SpectralField to_spectral(const PhysicalField& v, const TorusGrid& grid) {
  const int dim = v.dim, p = v.points_per_axis, h = p / 2 + 1;
  if (dim != grid.dim()) throw std::invalid_argument("to_spectral: dimension mismatch");
  if (v.values.size() != volume(dim, p)) throw std::invalid_argument("to_spectral: shape mismatch");
  if (p < 2 * grid.n_max() + 1)
    throw std::invalid_argument("to_spectral: physical grid too small for mode cube");
  const std::size_t total = v.values.size();
  std::vector<Complex> half(total / std::size_t(p) * std::size_t(h));
  std::vector<double> in(v.values);
  fftw_plan plan = PlanCache::instance().get(PlanKind::r2c, dim, p);
  fftw_execute_dft_r2c(plan, in.data(), reinterpret_cast<fftw_complex*>(half.data()));
  const double scale = 1.0 / double(total);
  SpectralField out(grid);
  const int n = grid.n_max(), side = grid.side();
  if (dim == 2) {
    for (int a = -n; a <= n; ++a) {
      const std::size_t dst = std::size_t(a + n) * side + n;
      const std::size_t row = std::size_t(wrap(a, p)) * h;
      const std::size_t nrow = std::size_t(wrap(-a, p)) * h;
      for (int b = 0; b <= n; ++b) {
        out[dst + b] = half[row + b] * scale;
        if (b > 0) out[dst - b] = std::conj(half[nrow + b]) * scale;
      }
    }
  } else {
    for (int a = -n; a <= n; ++a) {
      for (int b = -n; b <= n; ++b) {
        const std::size_t dst = (std::size_t(a + n) * side + (b + n)) * side + n;
        const std::size_t row = (std::size_t(wrap(a, p)) * p + wrap(b, p)) * h;
        const std::size_t nrow = (std::size_t(wrap(-a, p)) * p + wrap(-b, p)) * h;
        for (int c = 0; c <= n; ++c) {
          out[dst + c] = half[row + c] * scale;
          if (c > 0) out[dst - c] = std::conj(half[nrow + c]) * scale;
        }
      }
    }
  }
  return out;
}

std::vector<Complex> to_physical_complex(const SpectralField& f, int p) {
  check_points(f, p, "to_physical_complex");
  const TorusGrid& g = f.grid();
  const int dim = g.dim();
  std::vector<Complex> buf(volume(dim, p), Complex(0.0));
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Mode m = g.mode(i);
    std::size_t k = 0;
    for (int d = 0; d < dim; ++d) k = k * p + wrap(m[d], p);
    buf[k] = f[i];
  }
  std::vector<Complex> out(buf.size());
  fftw_plan plan = PlanCache::instance().get(PlanKind::c2c_backward, dim, p);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

SpectralField to_spectral_complex(std::span<const Complex> values, int p, const TorusGrid& grid) {
  const int dim = grid.dim();
  if (values.size() != volume(dim, p)) throw std::invalid_argument("to_spectral_complex: shape mismatch");
  if (p < 2 * grid.n_max() + 1)
    throw std::invalid_argument("to_spectral_complex: physical grid too small for mode cube");
  std::vector<Complex> in(values.begin(), values.end()), out(values.size());
  fftw_plan plan = PlanCache::instance().get(PlanKind::c2c_forward, dim, p);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  const double scale = 1.0 / double(values.size());
  SpectralField f(grid);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Mode m = grid.mode(i);
    std::size_t k = 0;
    for (int d = 0; d < dim; ++d) k = k * p + wrap(m[d], p);
    f[i] = out[k] * scale;
  }
  return f;
}

std::vector<double> inverse_transform(const SpectralField& f) {
  const int m = f.grid().modes_per_axis();
  if (f.hermitian_residual() <= kHermitianTolerance) return to_physical(f, m).values;
  auto c = to_physical_complex(f, m);
  std::vector<double> out(c.size());
  std::transform(c.begin(), c.end(), out.begin(), [](const Complex& z) { return z.real(); });
  return out;
}

SpectralField forward_transform(std::span<const double> values, const TorusGrid& grid) {
  const int m = grid.modes_per_axis();
  if (values.size() != grid.physical_size())
    throw std::invalid_argument("forward_transform: array shape does not match grid");
  PhysicalField v{grid.dim(), m, std::vector<double>(values.begin(), values.end())};
  return to_spectral(v, grid);
}

SpectralField multiply_fields(std::initializer_list<FieldRef> factors, ProductMode mode) {
  return multiply_fields(std::span<const FieldRef>(factors.begin(), factors.size()), mode);
}

SpectralField multiply_fields(std::span<const FieldRef> factors, ProductMode mode) {
  if (factors.empty()) throw std::invalid_argument("multiply_fields: no factors");
  const SpectralField& first = factors.front().get();
  const TorusGrid& grid = first.grid();
  for (const auto& f : factors) require_same_modes(first, f.get(), "multiply_fields");
  const int count = int(factors.size());
  if (count == 1) return first;
  int p = grid.modes_per_axis();
  if (mode == ProductMode::dealiased) {
    if (count > grid.padding_factor())
      throw std::invalid_argument("multiply_fields: padding factor " +
                                  std::to_string(grid.padding_factor()) + " insufficient for " +
                                  std::to_string(count) + " factors");
    p = alias_free_size(count * grid.n_max(), grid.n_max());
  }
  const bool hermitian = std::all_of(factors.begin(), factors.end(), [](const FieldRef& f) {
    return f.get().hermitian_residual() <= kHermitianTolerance;
  });
  if (hermitian) {
    PhysicalField acc = to_physical(first, p);
    for (int i = 1; i < count; ++i) {
      const PhysicalField v = to_physical(factors[i].get(), p);
      for (std::size_t k = 0; k < acc.values.size(); ++k) acc.values[k] *= v.values[k];
    }
    return to_spectral(acc, grid);
  }
  std::vector<Complex> acc = to_physical_complex(first, p);
  for (int i = 1; i < count; ++i) {
    const auto v = to_physical_complex(factors[i].get(), p);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] *= v[k];
  }
  return to_spectral_complex(acc, p, grid);
}

SpectralField product_truncated(const SpectralField& a, const SpectralField& b, int out_n_max) {
  const int p = std::max({alias_free_size(a.n_max() + b.n_max(), out_n_max),
                          fft_friendly_size(2 * std::max(a.n_max(), b.n_max()) + 1)});
  PhysicalField va = to_physical(a, p);
  const PhysicalField vb = to_physical(b, p);
  for (std::size_t k = 0; k < va.values.size(); ++k) va.values[k] *= vb.values[k];
  return to_spectral(va, grid_with_cutoff(a.grid(), out_n_max));
}

std::size_t fft_plan_count() { return PlanCache::instance().size(); }

}  // namespace scalefield
