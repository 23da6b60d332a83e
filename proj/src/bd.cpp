#include "scalefield/bd.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "scalefield/besov.hpp"
#include "scalefield/parallel.hpp"
#include "scalefield/transform.hpp"

namespace scalefield {

const char* to_string(AnsatzKind kind) noexcept {
  return kind == AnsatzKind::raw ? "raw" : "renormalized";
}

void BdParams::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("bd: lambda must be finite and >= 0");
  if (!std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("bd: counterterms must be finite");
  if (!std::isfinite(mass)) throw std::invalid_argument("bd: mass must be finite");
  if (probe && !probe->all_finite()) throw std::invalid_argument("bd: probe must be finite");
}

double functional_value(const SpectralField& phi, const BdParams& params) {
  double v = params.functional == Functional::quadratic
                 ? 0.5 * params.mass * params.mass * l2_norm_sq(phi)
                 : potential_V(phi, params.lambda, params.a, params.b);
  if (params.probe) v += inner(params.probe->resized(phi.n_max()), phi);
  return v;
}

SpectralField functional_gradient(const SpectralField& phi, const BdParams& params) {
  SpectralField g(phi.grid());
  if (params.functional == Functional::quadratic) {
    g = params.mass * params.mass * phi;
  } else if (params.lambda > 0.0) {
    const double lam = params.lambda, a = params.a;
    g = map_pointwise(phi, 3, phi.n_max(),
                      [lam, a](double x) { return lam * (4.0 * x * x * x - 2.0 * a * x); });
  }
  if (params.probe) g += params.probe->resized(phi.n_max());
  return g;
}

DriftAnsatz::DriftAnsatz(std::shared_ptr<const PathGeometry> geometry, AnsatzKind kind)
    : geometry_(std::move(geometry)), kind_(kind) {
  if (!geometry_) throw std::invalid_argument("DriftAnsatz: null geometry");
  const TorusGrid& full = geometry_->grid();
  std::size_t total = 0;
  for (std::size_t k = 0; k < geometry_->interval_count(); ++k) {
    std::vector<std::uint32_t> reps;
    for (std::uint32_t idx : geometry_->band(k).modes)
      if (is_orbit_representative(full.mode(idx))) reps.push_back(idx);
    offset_.push_back(total);
    total += reps.size();
    orbits_.push_back(std::move(reps));
  }
  coefficients.assign(total * kSlots, 0.0);
}

bool DriftAnsatz::is_active(std::size_t i) const {
  if (i >= size()) return false;
  if (i % kSlots != open_im) return true;
  const std::size_t orbit = i / kSlots;
  const auto k = std::size_t(std::upper_bound(offset_.begin(), offset_.end(), orbit) - offset_.begin()) - 1;
  const Mode n = geometry_->grid().mode(orbits_[k][orbit - offset_[k]]);
  return n != Mode{0, 0, 0};
}

namespace {

struct Tape {
  std::vector<SpectralField> u;
  std::vector<std::vector<Complex>> y;  // Y_k at the orbit representatives
  std::vector<SpectralField> w2;        // W2(W_k), renormalized kind only
  SpectralField phi;
  PathObjective objective;
};

Complex sample_at(const SpectralField& w, const SpectralField& i, const Mode& n) {
  if (!w.grid().contains(n)) return 0.0;
  return w.at(n) + i.at(n);
}

void forward(const DriftAnsatz& ansatz, const NoisePath& noise, const BdParams& params,
             const DriftContext& ctx, Tape& tape, bool keep) {
  const PathGeometry& g = ansatz.geometry();
  if (&noise.geometry() != &g || &ctx.geometry() != &g)
    throw std::invalid_argument("bd: ansatz, noise and context use different geometries");
  const TorusGrid& full = g.grid();
  const std::size_t K = g.interval_count();
  const bool renorm = ansatz.kind() == AnsatzKind::renormalized && params.lambda > 0.0;
  const double lam = params.lambda;
  const auto& coef = ansatz.coefficients;

  FreeFieldCursor cursor(noise);
  SpectralField I(g.knot_grid(0));
  double energy = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const SpectralField& W = cursor.field();
    const IntervalBand& band = g.band(k);
    SpectralField u(g.band_grid(k));
    SpectralField w2;
    if (renorm && band.size() > 0) {
      const int B = band.n_max, n = W.n_max();
      u.add_scaled(bold_W3(W, ctx.c(k), B), -lam);
      w2 = bold_W2(W, ctx.c(k), std::min(2 * n, B + n));
      const SpectralField flat = ctx.flat(k, I);
      u.add_scaled(paraproduct(w2, flat, ParaproductMode::greater, B), -lam);
      u = apply_j_bar(g, k, u);
    }
    std::vector<Complex> y(ansatz.orbit_count(k));
    for (std::size_t j = 0; j < y.size(); ++j) {
      const Mode n = full.mode(ansatz.orbit_mode(k, j));
      y[j] = sample_at(W, I, n);
      const double re = coef[ansatz.index(k, j, DriftAnsatz::open_re)];
      const double im = coef[ansatz.index(k, j, DriftAnsatz::open_im)];
      const double gain = coef[ansatz.index(k, j, DriftAnsatz::gain)];
      if (n == Mode{0, 0, 0}) {
        u.at(n) += re + gain * y[j].real();
      } else {
        const Complex l = Complex(re, im) + gain * y[j];
        u.at(n) += l;
        u.at(negate(n)) += std::conj(l);
      }
    }
    const double dt = g.dt(k);
    energy += l2_norm_sq(u) * dt;
    I = I.resized(g.knot_cutoff(k + 1));
    I.add_scaled(apply_j_bar(g, k, u), dt);
    tape.u.push_back(std::move(u));
    if (keep) {
      tape.y.push_back(std::move(y));
      tape.w2.push_back(std::move(w2));
    }
    cursor.advance();
  }
  while (!cursor.at_end()) cursor.advance();
  const SpectralField& WT = cursor.field();
  tape.phi = WT + I.resized(WT.n_max());
  tape.objective.terminal = functional_value(tape.phi, params);
  tape.objective.energy = energy;
  tape.objective.value = tape.objective.terminal + 0.5 * energy;
}

void backward(const DriftAnsatz& ansatz, const BdParams& params, const DriftContext& ctx,
              const Tape& tape, std::vector<double>& grad) {
  const PathGeometry& g = ansatz.geometry();
  const TorusGrid& full = g.grid();
  const std::size_t K = g.interval_count();
  const bool renorm = ansatz.kind() == AnsatzKind::renormalized && params.lambda > 0.0;
  const auto& coef = ansatz.coefficients;
  grad.assign(ansatz.size(), 0.0);

  SpectralField p = functional_gradient(tape.phi, params);  // adjoint of I_K
  for (std::size_t k = K; k-- > 0;) {
    const double dt = g.dt(k);
    p = p.resized(g.knot_cutoff(k + 1));
    SpectralField q = apply_j_bar(g, k, p);
    q *= dt;
    q.add_scaled(tape.u[k], dt);
    SpectralField next = p.resized(g.knot_cutoff(k));
    const TorusGrid& ng = next.grid();
    for (std::size_t j = 0; j < ansatz.orbit_count(k); ++j) {
      const Mode n = full.mode(ansatz.orbit_mode(k, j));
      const Complex qn = q.at(n);
      const Complex y = tape.y[k][j];
      const double w = n == Mode{0, 0, 0} ? 1.0 : 2.0;
      grad[ansatz.index(k, j, DriftAnsatz::open_re)] = w * qn.real();
      grad[ansatz.index(k, j, DriftAnsatz::open_im)] = n == Mode{0, 0, 0} ? 0.0 : w * qn.imag();
      grad[ansatz.index(k, j, DriftAnsatz::gain)] = w * (qn * std::conj(y)).real();
      const double gain = coef[ansatz.index(k, j, DriftAnsatz::gain)];
      if (gain != 0.0 && ng.contains(n)) {
        next.at(n) += gain * qn;
        if (n != Mode{0, 0, 0}) next.at(negate(n)) += gain * std::conj(qn);
      }
    }
    if (renorm && g.band(k).size() > 0) {
      const SpectralField h = apply_j_bar(g, k, q);
      const SpectralField adj = paraproduct_greater_adjoint(tape.w2[k], h, next.n_max());
      next.add_scaled(ctx.flat(k, adj), -params.lambda);
    }
    p = std::move(next);
  }
}

}  // namespace

PathObjective path_objective(const DriftAnsatz& ansatz, const NoisePath& noise,
                             const BdParams& params, const DriftContext& ctx,
                             std::vector<double>* grad) {
  for (double c : ansatz.coefficients)
    if (!std::isfinite(c)) throw std::invalid_argument("bd: non-finite ansatz coefficient");
  Tape tape;
  forward(ansatz, noise, params, ctx, tape, grad != nullptr);
  if (grad) backward(ansatz, params, ctx, tape, *grad);
  return tape.objective;
}

DriftPath ansatz_drift(const DriftAnsatz& ansatz, const NoisePath& noise, const BdParams& params,
                       const DriftContext& ctx) {
  Tape tape;
  forward(ansatz, noise, params, ctx, tape, false);
  return std::move(tape.u);
}

namespace {

Estimate summarize(std::vector<double> samples) {
  Estimate e;
  const double n = double(samples.size());
  e.value = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : samples) ss += (s - e.value) * (s - e.value);
  e.std_error = samples.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  e.samples = std::move(samples);
  return e;
}

}  // namespace

Estimate bd_objective(const DriftAnsatz& ansatz, std::span<const NoisePath> batch,
                      const BdParams& params, const DriftContext& ctx, int workers) {
  params.validate();
  if (batch.empty()) throw std::invalid_argument("bd_objective: empty batch");
  std::vector<double> values(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    values[i] = path_objective(ansatz, batch[i], params, ctx).value;
  });
  return summarize(std::move(values));
}

Estimate objective_and_gradient(const DriftAnsatz& ansatz, std::span<const NoisePath> batch,
                                const BdParams& params, const DriftContext& ctx, int workers,
                                std::vector<double>& grad) {
  params.validate();
  if (batch.empty()) throw std::invalid_argument("gradient: empty batch");
  std::vector<std::vector<double>> per(batch.size());
  std::vector<double> values(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    values[i] = path_objective(ansatz, batch[i], params, ctx, &per[i]).value;
  });
  grad.assign(ansatz.size(), 0.0);
  for (const auto& gpath : per)
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += gpath[j];
  for (double& v : grad) v /= double(batch.size());
  return summarize(std::move(values));
}

std::vector<double> gradient(const DriftAnsatz& ansatz, std::span<const NoisePath> batch,
                             const BdParams& params, const DriftContext& ctx, int workers) {
  std::vector<double> grad;
  objective_and_gradient(ansatz, batch, params, ctx, workers, grad);
  return grad;
}

GradientCheck check_gradient(const DriftAnsatz& ansatz, std::span<const NoisePath> batch,
                             const BdParams& params, const DriftContext& ctx, std::size_t count,
                             std::uint64_t seed, double h) {
  GradientCheck report;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < ansatz.size(); ++i)
    if (ansatz.is_active(i)) active.push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(active.begin(), active.end(), rng);
  active.resize(std::min(count, active.size()));
  std::sort(active.begin(), active.end());
  const std::vector<double> grad = gradient(ansatz, batch, params, ctx);
  // coordinates with a negligible gradient are judged against the gradient scale
  double scale = 0.0;
  for (double g : grad) scale = std::max(scale, std::abs(g));
  const double floor = 1e-6 * std::max(scale, 1e-6);
  DriftAnsatz probe = ansatz;
  for (std::size_t i : active) {
    const double x = probe.coefficients[i];
    probe.coefficients[i] = x + h;
    const double up = bd_objective(probe, batch, params, ctx).value;
    probe.coefficients[i] = x - h;
    const double down = bd_objective(probe, batch, params, ctx).value;
    probe.coefficients[i] = x;
    const double fd = (up - down) / (2.0 * h);
    report.coordinates.push_back(i);
    report.analytic.push_back(grad[i]);
    report.finite_difference.push_back(fd);
    // central differences resolve |g| only down to ~eps |f| / h
    const double resolution = 1e4 * std::numeric_limits<double>::epsilon() * std::max(std::abs(up), std::abs(down)) / h;
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), floor, resolution});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(fd - grad[i]) / denom);
  }
  return report;
}

Estimate direct_log_partition(const TorusGrid& grid, const Symbols& symbols, double T,
                              const BdParams& params, std::size_t replicas, std::uint64_t seed,
                              int workers) {
  params.validate();
  if (replicas < 100) throw std::invalid_argument("direct_log_partition: need at least 100 replicas");
  std::vector<double> logw(replicas);
  parallel_for(replicas, workers, [&](std::size_t r) {
    const SpectralField w = sample_terminal_field(grid, symbols, T, seed, r);
    logw[r] = -functional_value(w, params);
  });
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logw)
    if (std::isfinite(v)) top = std::max(top, v);
  if (!std::isfinite(top))
    throw std::runtime_error("direct_log_partition: no finite weight; use a smaller lambda or T");
  double s1 = 0.0, s2 = 0.0;
  for (double v : logw) {
    const double e = std::isfinite(v) ? std::exp(v - top) : 0.0;
    s1 += e;
    s2 += e * e;
  }
  const double n = double(replicas);
  const double mean = s1 / n;
  const double var = std::max(0.0, (s2 / n - mean * mean) * n / (n - 1.0));
  Estimate e;
  e.value = -(top + std::log(mean));
  e.std_error = std::sqrt(var / n) / mean;
  return e;
}

double quadratic_closed_form(const TorusGrid& grid, const Symbols& symbols, double T, double mass) {
  double s = 0.0;
  for (std::size_t i = 0; i < grid.mode_count(); ++i) {
    const Mode n = grid.mode(i);
    const double r = symbols.eval_rho(T, n);
    s += 0.5 * std::log1p(mass * mass * r * r / (1.0 + squared_norm(n)));
  }
  return s;
}

std::vector<NoisePath> make_batch(std::shared_ptr<const PathGeometry> geometry, std::uint64_t seed,
                                  std::uint64_t first_replica, std::size_t count) {
  std::vector<NoisePath> batch;
  batch.reserve(count);
  for (std::size_t i = 0; i < count; ++i) batch.emplace_back(geometry, seed, first_replica + i);
  return batch;
}

namespace {

// Diagonal of the Hessian of the energy term 1/2 sum ||u_k||^2 dt_k in the
// coefficients, averaged over the batch; used as a preconditioner.
std::vector<double> energy_curvature(const DriftAnsatz& ansatz, std::span<const NoisePath> batch,
                                     const BdParams& params, const DriftContext& ctx) {
  const PathGeometry& g = ansatz.geometry();
  const TorusGrid& full = g.grid();
  std::vector<double> y2(ansatz.orbit_total(), 0.0);
  for (const NoisePath& noise : batch) {
    Tape tape;
    forward(ansatz, noise, params, ctx, tape, true);
    for (std::size_t k = 0; k < g.interval_count(); ++k)
      for (std::size_t j = 0; j < ansatz.orbit_count(k); ++j)
        y2[ansatz.index(k, j, DriftAnsatz::open_re) / DriftAnsatz::kSlots] += std::norm(tape.y[k][j]);
  }
  std::vector<double> d(ansatz.size(), 1.0);
  for (std::size_t k = 0; k < g.interval_count(); ++k)
    for (std::size_t j = 0; j < ansatz.orbit_count(k); ++j) {
      const bool zero = full.mode(ansatz.orbit_mode(k, j)) == Mode{0, 0, 0};
      const double w = (zero ? 1.0 : 2.0) * g.dt(k);
      const std::size_t o = ansatz.index(k, j, DriftAnsatz::open_re) / DriftAnsatz::kSlots;
      const double yy = y2[o] / double(batch.size());
      d[ansatz.index(k, j, DriftAnsatz::open_re)] = w;
      d[ansatz.index(k, j, DriftAnsatz::open_im)] = w;
      d[ansatz.index(k, j, DriftAnsatz::gain)] = w * std::max(yy, 1e-12);
    }
  return d;
}

double sample_variance(const std::vector<double>& v) {
  const double se = summarize(v).std_error;
  return se * se * double(v.size());
}

}  // namespace

OptReport optimize(std::shared_ptr<const PathGeometry> geometry, const BdParams& params,
                   const OptConfig& config) {
  params.validate();
  if (config.epochs < 1 || config.batch < 2 || config.eval_batch < 2 || !(config.step > 0.0))
    throw std::invalid_argument("optimize: epochs >= 1, batch >= 2, eval_batch >= 2, step > 0");
  const DriftContext ctx(geometry);
  DriftAnsatz ansatz(geometry, config.kind);
  OptReport rep;

  std::uint64_t group = 0;
  auto batch_for = [&](std::uint64_t gi) {
    return make_batch(geometry, config.seed, gi * config.batch, config.batch);
  };
  std::vector<NoisePath> batch = batch_for(group);
  std::vector<double> precond = energy_curvature(ansatz, batch, params, ctx);
  double step = config.step;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_coef = ansatz.coefficients, best_grad, prev_coef = ansatz.coefficients;
  int stale = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.refresh > 0 && epoch > 0 && epoch % config.refresh == 0) {
      batch = batch_for(++group);
      best = std::numeric_limits<double>::infinity();
      stale = 0;
      precond = energy_curvature(ansatz, batch, params, ctx);
    }
    std::vector<double> grad;
    const Estimate obj = objective_and_gradient(ansatz, batch, params, ctx, config.workers, grad);
    rep.trace.push_back(obj.value);
    rep.steps.push_back(step);
    const bool blown = !std::isfinite(obj.value) || std::abs(obj.value) > config.divergence;
    if (blown && !std::isfinite(best)) {
      rep.aborted = true;
      rep.diagnostic = "objective diverged at epoch " + std::to_string(epoch);
      break;
    }
    if (!blown && (!std::isfinite(best) || obj.value < best - 1e-12 * std::max(1.0, std::abs(best)))) {
      best = obj.value;
      prev_coef = std::move(best_coef);
      best_coef = ansatz.coefficients;
      best_grad = std::move(grad);
      stale = 0;
    } else if (blown || obj.value > best || ++stale >= config.patience) {
      // back to the best point with half the step
      step *= 0.5;
      ++rep.halvings;
      stale = 0;
      if (step < config.min_step) {
        ansatz.coefficients = best_coef;
        break;
      }
    } else {
      prev_coef = std::move(best_coef);
      best_coef = ansatz.coefficients;
      best_grad = std::move(grad);
    }
    if (epoch % 10 == 0) precond = energy_curvature(ansatz, batch, params, ctx);
    for (std::size_t i = 0; i < best_grad.size(); ++i)
      ansatz.coefficients[i] = best_coef[i] - step * best_grad[i] / precond[i];
  }
  // the last step was never evaluated
  if (!rep.aborted) ansatz.coefficients = best_coef;

  const std::vector<NoisePath> eval = make_batch(geometry, config.seed, std::uint64_t(1) << 40, config.eval_batch);
  const Estimate fin = bd_objective(ansatz, eval, params, ctx, config.workers);
  rep.final_value = fin.value;
  rep.final_std_error = fin.std_error;

  // common versus independent noise for a difference of two nearby ansatz states
  DriftAnsatz before = ansatz;
  before.coefficients = prev_coef;
  const Estimate prev_same = bd_objective(before, eval, params, ctx, config.workers);
  const std::vector<NoisePath> other =
      make_batch(geometry, config.seed, (std::uint64_t(1) << 40) + config.eval_batch, config.eval_batch);
  const Estimate prev_other = bd_objective(before, other, params, ctx, config.workers);
  std::vector<double> diff(eval.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = fin.samples[i] - prev_same.samples[i];
  rep.crn_difference_variance = sample_variance(diff);
  rep.independent_difference_variance = sample_variance(fin.samples) + sample_variance(prev_other.samples);

  if (config.gradcheck_coordinates > 0) {
    const std::size_t m = std::min<std::size_t>(4, batch.size());
    rep.gradient_check = check_gradient(ansatz, std::span<const NoisePath>(batch).first(m), params, ctx,
                                        config.gradcheck_coordinates, config.seed);
  }
  if (config.direct_replicas >= 100) {
    const Estimate d = direct_log_partition(geometry->grid(), geometry->symbols(), geometry->schedule().T(),
                                            params, config.direct_replicas, config.seed, config.workers);
    rep.direct_value = d.value;
    rep.direct_std_error = d.std_error;
  }
  rep.coefficients = ansatz.coefficients;
  return rep;
}

}  // namespace scalefield
