#include "scalefield/drift.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "scalefield/besov.hpp"
#include "scalefield/transform.hpp"

namespace scalefield {

namespace {

double binomial(int n, int k) {
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * double(n - k + i) / double(i);
  return b;
}

// Cutoff that keeps (f > g) exact on an output cube of cutoff `out` when g has cutoff n_g.
int high_factor_cutoff(int n_f_exact, int out, int n_g) { return std::min(n_f_exact, out + n_g); }

SpectralField same_cube(const SpectralField& f, int n) {
  return f.n_max() == n ? f : f.resized(n);
}

bool is_zero_field(const SpectralField& f) {
  return std::all_of(f.coeffs().begin(), f.coeffs().end(),
                     [](const Complex& c) { return c == Complex(0.0); });
}

}  // namespace

void DriftParams::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("drift: lambda must be finite and >= 0");
  if (!(T_bar >= 0.0)) throw std::invalid_argument("drift: T_bar must be >= 0");
  if (aux && (n_aux < 1 || n_aux % 2 == 0))
    throw std::invalid_argument("drift: n_aux must be a positive odd integer");
  if (!(N_stop >= 0.0)) throw std::invalid_argument("drift: N_stop must be >= 0");
  if (picard_iterations < 0) throw std::invalid_argument("drift: picard_iterations must be >= 0");
}

const char* to_string(DriftMode mode) noexcept {
  return mode == DriftMode::under_P ? "under-p" : "under-q";
}

DriftContext::DriftContext(std::shared_ptr<const PathGeometry> geometry)
    : geometry_(std::move(geometry)),
      wick_(geometry_ ? geometry_->grid() : TorusGrid{}, geometry_ ? geometry_->symbols() : Symbols{}) {
  if (!geometry_) throw std::invalid_argument("DriftContext: null geometry");
  for (double t : geometry_->schedule().knots()) {
    c_.push_back(wick_.c(t));
    c_tilde_.push_back(wick_.c_tilde(t));
  }
}

SpectralField DriftContext::flat(std::size_t k, const SpectralField& f) const {
  return apply_theta(geometry_->symbols(), std::max(geometry_->knot(k), 1e-300), f);
}

SpectralField xi_step(std::size_t k, const SpectralField& H, const SpectralField& Iu_flat,
                      const DriftParams& params, const DriftContext& ctx) {
  const PathGeometry& g = ctx.geometry();
  const int B = g.band(k).n_max;
  SpectralField acc(g.band_grid(k));
  if (g.band(k).size() == 0) return acc;
  const double t = g.knot(k), c = ctx.c(k);
  if (params.lambda > 0.0) {
    acc.add_scaled(bold_W3(H, c, B), -params.lambda);
    if (t >= params.T_bar && !is_zero_field(Iu_flat)) {
      const int nf = high_factor_cutoff(2 * H.n_max(), B, Iu_flat.n_max());
      const SpectralField w2 = bold_W2(H, c, nf);
      acc.add_scaled(paraproduct(w2, Iu_flat, ParaproductMode::greater, B), -params.lambda);
    }
  }
  if (params.aux) {
    const SpectralField s = smoothed_wick(H, params.n_aux, t, ctx.wick(), B);
    acc.add_scaled(apply_bracket_power(-0.5, s), -1.0);
  }
  return apply_j_bar(g, k, acc);
}

SpectralField xi_step_expanded(std::size_t k, const SpectralField& W, const SpectralField& Iu,
                               const SpectralField& Iu_flat, const DriftParams& params,
                               const DriftContext& ctx) {
  const PathGeometry& g = ctx.geometry();
  const int B = g.band(k).n_max;
  SpectralField acc(g.band_grid(k));
  if (g.band(k).size() == 0) return acc;
  const double t = g.knot(k), c = ctx.c(k), ct = ctx.c_tilde(k), lam = params.lambda;
  const std::array<FieldRef, 2> wi{std::cref(W), std::cref(Iu)};
  if (lam > 0.0) {
    // W3 - W2 I + 12 W I^2 - 4 I^3
    acc.add_scaled(combine_pointwise(wi, 3, B,
                                     [c](double w, double i) {
                                       return 4.0 * (w * w * w - 3.0 * c * w) -
                                              12.0 * (w * w - c) * i + 12.0 * w * i * i -
                                              4.0 * i * i * i;
                                     }),
                   -lam);
    if (t >= params.T_bar && !is_zero_field(Iu_flat)) {
      const int n = std::max(W.n_max(), Iu.n_max());
      const int nf = high_factor_cutoff(2 * n, B, Iu_flat.n_max());
      const SpectralField f = combine_pointwise(wi, 2, nf, [c](double w, double i) {
        return 12.0 * (w * w - c) - 24.0 * w * i + 12.0 * i * i;
      });
      acc.add_scaled(paraproduct(f, Iu_flat, ParaproductMode::greater, B), -lam);
    }
  }
  if (params.aux) {
    const SpectralField gw = apply_bracket_power(-0.5, W), gi = apply_bracket_power(-0.5, Iu);
    const int n = params.n_aux;
    const SpectralField s = combine_pointwise(
        std::array<FieldRef, 2>{std::cref(gw), std::cref(gi)}, n, B, [n, ct](double x, double y) {
          double sum = 0.0;
          for (int i = 0; i <= n; ++i)
            sum += binomial(n, i) * wick_polynomial(i, x, ct) * std::pow(-y, n - i);
          return sum;
        });
    acc.add_scaled(apply_bracket_power(-0.5, s), -1.0);
  }
  return apply_j_bar(g, k, acc);
}

namespace {

DriftRun march(const NoisePath& noise, const DriftParams& params, const DriftContext& ctx,
               const DriftOptions& options, DriftMode mode) {
  params.validate();
  if (!noise.geometry_ptr() || &noise.geometry() != &ctx.geometry())
    throw std::invalid_argument("drift: noise and context use different geometries");
  const PathGeometry& g = ctx.geometry();
  const std::size_t K = g.interval_count();

  DriftRun run;
  run.mode = mode;
  run.geometry = ctx.geometry_ptr();
  run.params = params;
  run.recorded = options.record_paths;
  run.stop_index = K;
  run.energy.push_back(0.0);

  FreeFieldCursor cursor(noise);
  SpectralField I(g.knot_grid(0));
  auto record = [&]() {
    if (!run.recorded) return;
    const SpectralField& w = cursor.field();
    if (mode == DriftMode::under_P) {
      run.W.snapshots.push_back(w);
      run.Wtilde.snapshots.push_back(w - same_cube(I, w.n_max()));
    } else {
      run.Wtilde.snapshots.push_back(w);
      run.W.snapshots.push_back(w + same_cube(I, w.n_max()));
    }
    run.Iu.snapshots.push_back(same_cube(I, w.n_max()));
  };
  run.W.geometry = run.Wtilde.geometry = run.Iu.geometry = run.geometry;
  record();

  bool stopped = false;
  std::size_t k = 0;
  for (; k < K; ++k) {
    if (g.knot(k) >= options.horizon) break;
    const SpectralField& wk = cursor.field();
    if (!stopped && run.energy.back() >= params.N_stop) {
      stopped = true;
      run.stop_index = k;
    }
    const double dt = g.dt(k);
    SpectralField uk(g.band_grid(k));
    if (!stopped) {
      auto evaluate = [&](const SpectralField& ik) {
        const int n = std::max(wk.n_max(), ik.n_max());
        const SpectralField flat = ctx.flat(k, ik);
        if (mode == DriftMode::under_P)
          return xi_step(k, same_cube(wk, n) - same_cube(ik, n), flat, params, ctx);
        return xi_step(k, wk, flat, params, ctx);
      };
      uk = evaluate(I);
      for (int p = 0; p < params.picard_iterations; ++p) {
        SpectralField next = I.resized(g.knot_cutoff(k + 1));
        next.add_scaled(apply_j_bar(g, k, uk), dt);
        uk = evaluate(next);
      }
      if (!uk.all_finite() || !std::isfinite(run.energy.back() + l2_norm_sq(uk) * dt)) {
        run.aborted = true;
        run.abort_knot = k;
        std::ostringstream msg;
        msg << "non-finite drift at knot " << k << " (t = " << g.knot(k)
            << ", energy so far " << run.energy.back() << ")";
        run.diagnostic = msg.str();
        break;
      }
    }
    const double e = l2_norm_sq(uk) * dt;
    double pairing = girsanov_pairing(uk, noise, k);
    if (mode == DriftMode::under_Q) pairing += e;  // dX = dB~ + u dt
    run.pairing += pairing;
    run.energy.push_back(run.energy.back() + e);
    I = I.resized(g.knot_cutoff(k + 1));
    I.add_scaled(apply_j_bar(g, k, uk), dt);
    if (run.recorded) run.u.push_back(std::move(uk));
    cursor.advance();
    record();
  }
  run.knots_marched = k;
  run.complete = !run.aborted && k == K;
  if (!stopped && run.complete && run.energy.back() >= params.N_stop) run.stop_index = K;
  while (!cursor.at_end()) cursor.advance();
  const SpectralField& free_T = cursor.field();
  const SpectralField i_T = same_cube(I, free_T.n_max());
  run.Iu_T = i_T;
  if (mode == DriftMode::under_P) {
    run.W_T = free_T;
    run.Wtilde_T = free_T - i_T;
  } else {
    run.Wtilde_T = free_T;
    run.W_T = free_T + i_T;
  }
  run.log_weight = run.pairing - 0.5 * run.energy.back();
  return run;
}

}  // namespace

DriftRun solve_under_P(const NoisePath& noise, const DriftParams& params, const DriftContext& ctx,
                       const DriftOptions& options) {
  return march(noise, params, ctx, options, DriftMode::under_P);
}

DriftRun solve_under_Q(const NoisePath& noise, const DriftParams& params, const DriftContext& ctx,
                       const DriftOptions& options) {
  return march(noise, params, ctx, options, DriftMode::under_Q);
}

double log_density_DT(DriftRun& run, double a, double b) {
  if (run.aborted) throw std::logic_error("log_density_DT: run was aborted");
  if (!run.complete) throw std::logic_error("log_density_DT: run did not reach T");
  const double v = potential_V(run.W_T, run.params.lambda, a, b);
  run.logD = -v - run.pairing + 0.5 * run.total_energy();
  return run.logD;
}

RemainderReport remainder_decomposition(const DriftRun& run, const DriftPath& w,
                                        const DriftContext& ctx) {
  if (run.mode != DriftMode::under_Q || !run.recorded)
    throw std::invalid_argument("remainder_decomposition: needs a recorded under_Q run");
  const PathGeometry& g = ctx.geometry();
  const std::size_t K = g.interval_count();
  if (w.size() != K) throw std::invalid_argument("remainder_decomposition: one shift per interval");
  if (run.Wtilde.size() != K + 1)
    throw std::invalid_argument("remainder_decomposition: run must cover [0, T]");
  DriftParams params = run.params;
  params.N_stop = std::numeric_limits<double>::infinity();
  const double lam = params.lambda;

  RemainderReport rep;
  SpectralField Iu(g.knot_grid(0)), Iw(g.knot_grid(0)), Ih(g.knot_grid(0));
  for (std::size_t k = 0; k < K; ++k) {
    const SpectralField& wt = run.Wtilde[k];
    const int n = wt.n_max();
    const int B = g.band(k).n_max;
    const double t = g.knot(k), c = ctx.c(k), ct = ctx.c_tilde(k);
    const SpectralField iw = same_cube(Iw, n), iu = same_cube(Iu, n);
    const SpectralField flat_u = ctx.flat(k, iu);
    const SpectralField flat_h = ctx.flat(k, iu + iw);

    SpectralField uw = xi_step(k, wt + iw, flat_u, params, ctx);

    // the two renormalization terms of the decomposition, on band cube
    SpectralField cube(g.band_grid(k)), para(g.band_grid(k));
    if (g.band(k).size() > 0 && lam > 0.0) {
      cube = apply_j_bar(g, k, bold_W3(wt, c, B));
      const SpectralField w2 = bold_W2(wt, c, high_factor_cutoff(2 * n, B, n));
      para = apply_j_bar(g, k, paraproduct(w2, flat_h, ParaproductMode::greater, B));
    }

    // explicit remainder
    SpectralField r(g.band_grid(k));
    if (g.band(k).size() > 0) {
      if (lam > 0.0) {
        const SpectralField a2 = wick_power(wt, 2, c, high_factor_cutoff(2 * n, B, n));
        const SpectralField rough = iw - ctx.flat(k, iw);
        r.add_scaled(paraproduct(a2, rough, ParaproductMode::greater, B), -12.0 * lam);
        r.add_scaled(paraproduct(a2, iw, ParaproductMode::resonant, B), -12.0 * lam);
        r.add_scaled(paraproduct(a2, iw, ParaproductMode::less, B), -12.0 * lam);
        const std::array<FieldRef, 2> fi{std::cref(wt), std::cref(iw)};
        r.add_scaled(combine_pointwise(fi, 3, B, [](double x, double y) { return x * y * y; }),
                     -12.0 * lam);
        r.add_scaled(combine_pointwise(fi, 3, B, [](double, double y) { return y * y * y; }),
                     -4.0 * lam);
        if (!is_zero_field(flat_u)) {
          const int nf = high_factor_cutoff(2 * n, B, flat_u.n_max());
          if (t >= params.T_bar) {
            const SpectralField wi = combine_pointwise(fi, 2, nf, [](double x, double y) { return x * y; });
            const SpectralField ii = combine_pointwise(fi, 2, nf, [](double, double y) { return y * y; });
            r.add_scaled(paraproduct(wi, flat_u, ParaproductMode::greater, B), -24.0 * lam);
            r.add_scaled(paraproduct(ii, flat_u, ParaproductMode::greater, B), -12.0 * lam);
          } else {
            r.add_scaled(paraproduct(a2.resized(nf), flat_u, ParaproductMode::greater, B), 12.0 * lam);
          }
        }
      }
      if (params.aux) {
        const SpectralField gw = apply_bracket_power(-0.5, wt), gi = apply_bracket_power(-0.5, iw);
        const int m = params.n_aux;
        const SpectralField s = combine_pointwise(
            std::array<FieldRef, 2>{std::cref(gw), std::cref(gi)}, m, B, [m, ct](double x, double y) {
              double sum = 0.0;
              for (int i = 0; i <= m; ++i)
                sum += binomial(m, i) * wick_polynomial(i, x, ct) * std::pow(y, m - i);
              return sum;
            });
        r.add_scaled(apply_bracket_power(-0.5, s), -1.0);
      }
      r = apply_j_bar(g, k, r);
    }

    SpectralField lhs = uw;
    lhs.add_scaled(cube, lam);
    lhs.add_scaled(para, lam);
    lhs.add_scaled(r, -1.0);
    rep.residual = std::max(rep.residual, l2_norm(lhs));
    rep.scale = std::max(rep.scale, l2_norm(uw));

    // l_k(h) = h + lambda J W3 + lambda J (W2 > I^flat(h)), with I(h) accumulated on its own
    SpectralField h = uw.resized(std::max(uw.n_max(), w[k].n_max()));
    h.add_scaled(w[k], 1.0);
    SpectralField l = h;
    SpectralField rw = r.resized(h.n_max());
    rw.add_scaled(w[k], 1.0);
    if (g.band(k).size() > 0 && lam > 0.0) {
      const SpectralField fh = ctx.flat(k, same_cube(Ih, n));
      const SpectralField w2 = bold_W2(wt, c, high_factor_cutoff(2 * n, B, n));
      l.add_scaled(cube, lam);
      l.add_scaled(apply_j_bar(g, k, paraproduct(w2, fh, ParaproductMode::greater, B)), lam);
    }
    rep.l_residual = std::max(rep.l_residual, l2_norm(l - same_cube(rw, l.n_max())));

    const double dt = g.dt(k);
    const int next = g.knot_cutoff(k + 1);
    Iu = Iu.resized(next);
    Iw = Iw.resized(next);
    Ih = Ih.resized(next);
    Iu.add_scaled(apply_j_bar(g, k, uw), dt);
    Iw.add_scaled(apply_j_bar(g, k, w[k]), dt);
    Ih.add_scaled(apply_j_bar(g, k, h), dt);
    rep.u_w.push_back(std::move(uw));
    rep.r_w.push_back(std::move(r));
  }
  return rep;
}

}  // namespace scalefield
