#include "scalefield/grid.hpp"

#include <sstream>
#include <stdexcept>

namespace scalefield {

TorusGrid::TorusGrid(int dim, int modes_per_axis, int n_max, int padding_factor)
    : dim_(dim), modes_per_axis_(modes_per_axis), n_max_(n_max), padding_factor_(padding_factor) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("TorusGrid: dim must be 2 or 3");
  if (n_max < 0) throw std::invalid_argument("TorusGrid: n_max must be non-negative");
  if (modes_per_axis < 2 * n_max + 1)
    throw std::invalid_argument("TorusGrid: modes_per_axis must be at least 2*n_max+1");
  if (padding_factor < 1) throw std::invalid_argument("TorusGrid: padding_factor must be >= 1");
  mode_count_ = 1;
  for (int d = 0; d < dim_; ++d) mode_count_ *= std::size_t(side());
}

TorusGrid TorusGrid::with_modes(int n_max, int dim, int padding_factor) {
  return TorusGrid(dim, fft_friendly_size(2 * n_max + 1), n_max, padding_factor);
}

std::size_t TorusGrid::physical_size() const noexcept {
  std::size_t s = 1;
  for (int d = 0; d < dim_; ++d) s *= std::size_t(modes_per_axis_);
  return s;
}

Mode TorusGrid::mode(std::size_t i) const noexcept {
  const std::size_t s = std::size_t(side());
  Mode n{0, 0, 0};
  if (dim_ == 3) {
    n[2] = int(i % s) - n_max_;
    i /= s;
  }
  n[1] = int(i % s) - n_max_;
  n[0] = int(i / s) - n_max_;
  return n;
}

bool TorusGrid::contains(const Mode& n) const noexcept {
  for (int d = 0; d < dim_; ++d)
    if (n[d] < -n_max_ || n[d] > n_max_) return false;
  return dim_ == 3 || n[2] == 0;
}

TorusGrid TorusGrid::with_cutoff(int n_max) const {
  if (n_max == n_max_) return *this;
  return TorusGrid(dim_, modes_per_axis_, n_max, padding_factor_);
}

std::string TorusGrid::describe() const {
  std::ostringstream os;
  os << "TorusGrid(dim=" << dim_ << ", M=" << modes_per_axis_ << ", n_max=" << n_max_
     << ", padding=" << padding_factor_ << ")";
  return os.str();
}

int fft_friendly_size(int n) {
  if (n <= 1) return 1;
  for (int m = n;; ++m) {
    int r = m;
    for (int p : {2, 3, 5, 7})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

}  // namespace scalefield
