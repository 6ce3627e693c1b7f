#include "mkvsde/mkv.hpp"
#include <cstdio>
#include <cstdlib>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mkvsde/kato.hpp"

namespace mkv {

CoefficientField freeze(const MkvCoefficients& coeffs, const MeasureFlow& mu) {
  if (!mu.sphi)
    throw AssumptionViolation("freeze needs an S_phi flow (grid densities)");
  auto flow = std::make_shared<MeasureFlow>(mu);
  auto mc = std::make_shared<MkvCoefficients>(coeffs);
  CoefficientField f;
  f.dim = coeffs.dim;
  f.Lambda = coeffs.Lambda;
  f.alpha = coeffs.alpha;
  f.N1 = coeffs.N1;
  f.N2 = coeffs.N2;
  f.p = coeffs.p;
  f.q = coeffs.q;
  f.a_constant_in_x = coeffs.sigma_constant_in_x;
  const int d = coeffs.dim;
  // piecewise-constant-left freeze of the pair (time node, measure): the
  // coefficient sees a (t, m) pair the continuum flow actually attains, which
  // keeps time-scaled interactions consistent between nodes
  f.a_eval = [flow, mc, d](double t, std::span<const double> x, double* out) {
    std::size_t k = flow->left_index(t);
    const Measure& m = flow->at(k);
    double tk = flow->times[k];
    double sig[4];
    mc->sigma(tk, x, m, sig);
    // a = sigma sigma^t / 2
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double acc = 0;
        for (int k = 0; k < d; ++k) acc += sig[i * d + k] * sig[j * d + k];
        out[i * d + j] = 0.5 * acc;
      }
  };
  if (coeffs.b) {
    f.b_eval = [flow, mc](double t, std::span<const double> x, double* out) {
      std::size_t k = flow->left_index(t);
      mc->b(flow->times[k], x, flow->at(k), out);
    };
  }
  return f;
}

namespace {

// start points and weights of the initial law for the kernel mixture
void xi_support(const Measure& xi, std::vector<double>* points,
                std::vector<double>* weights) {
  points->clear();
  weights->clear();
  if (xi.repr == Measure::Repr::Atoms) {
    points->assign(xi.points.begin(), xi.points.end());
    weights->assign(xi.weights.begin(), xi.weights.end());
    return;
  }
  const double vol = xi.grid.cell_volume();
  std::vector<double> c(xi.dim);
  for (std::size_t i = 0; i < xi.grid.ncells(); ++i) {
    double mass = xi.values[i] * vol;
    if (std::abs(mass) < 1e-10) continue;
    xi.grid.center(i, c.data());
    points->insert(points->end(), c.begin(), c.end());
    weights->push_back(mass);
  }
}

}  // namespace

MeasureFlow psi(const ScenarioConfig& scenario, const MeasureFlow& mu) {
  CoefficientField field = freeze(scenario.coeffs, mu);
  validate_coefficients(field, scenario.space, 3);
  KernelRequest rq;
  rq.s = 0;
  rq.t_nodes = scenario.time_grid;
  // A trivial series (constant-in-x diffusion, no drift) runs exactly from
  // the initial-law support on the full measure grid. Nontrivial series
  // evolve the initial density directly (the series is linear in the
  // start), on a capped grid, and the marginals are rebinned up.
  const bool trivial = field.a_constant_in_x && !field.has_drift();
  std::vector<Measure> out;
  if (trivial) {
    rq.ygrid = scenario.space;
    std::vector<double> xw;
    xi_support(scenario.initial_law, &rq.x_nodes, &xw);
    KernelGrid kg = heat_kernel(field, rq, scenario.series);
    for (std::size_t it = 0; it < kg.nt(); ++it)
      out.push_back(kg.marginal(xw, it));
  } else {
    rq.ygrid = coarsen_grid(scenario.space, scenario.series.max_kernel_cells);
    Measure rho = scenario.initial_law;
    if (rho.repr == Measure::Repr::Atoms) {
      // S_phi needs densities: mollify atoms by one kernel cell
      const double h = rq.ygrid.cell_width(0);
      std::vector<double> vals(rq.ygrid.ncells(), 0.0);
      for (std::size_t i = 0; i < rho.natoms(); ++i) {
        Measure g = Measure::gaussian1d(rho.points[i], h * h, rq.ygrid);
        for (std::size_t k = 0; k < vals.size(); ++k)
          vals[k] += rho.weights[i] * g.values[k];
      }
      rho = Measure::grid_density(rq.ygrid, std::move(vals));
    } else if (!rho.grid.same_as(rq.ygrid)) {
      rho = rebin(rho, rq.ygrid, 0.05);
    }
    rq.x_nodes = {0.0};
    KernelGrid kg = evolve_density(field, rq, rho.values, scenario.series);
    for (std::size_t it = 0; it < kg.nt(); ++it) {
      Measure m = kg.marginal({1.0}, it);
      if (!m.grid.same_as(scenario.space)) m = rebin(m, scenario.space, 0.05);
      out.push_back(std::move(m));
    }
  }
  return MeasureFlow::make(scenario.time_grid, std::move(out), true,
                           scenario.mass_tol);
}

MeasureFlow constant_initial_flow(const ScenarioConfig& scenario) {
  const Measure& xi = scenario.initial_law;
  Measure slice = Measure::zero_atoms(scenario.coeffs.dim);
  if (xi.repr == Measure::Repr::Grid) {
    slice = rebin(xi, scenario.space, 0.05);
  } else {
    // mollify atoms by a Gaussian of one-cell bandwidth (S_phi needs density)
    if (scenario.coeffs.dim != 1)
      throw Unsupported("atomic initial laws are mollified in d = 1 only");
    const double h = scenario.space.cell_width(0);
    std::vector<double> vals(scenario.space.ncells(), 0.0);
    for (std::size_t i = 0; i < xi.natoms(); ++i) {
      Measure g = Measure::gaussian1d(xi.points[i], h * h, scenario.space);
      for (std::size_t k = 0; k < vals.size(); ++k)
        vals[k] += xi.weights[i] * g.values[k];
    }
    slice = Measure::grid_density(scenario.space, std::move(vals));
  }
  double mass = slice.total_mass();
  if (mass > 0)
    for (double& v : slice.values) v /= mass;
  std::vector<Measure> ms(scenario.time_grid.size(), slice);
  return MeasureFlow::make(scenario.time_grid, std::move(ms), true, 1e-6);
}

FixedPointTrace picard_iterate(const ScenarioConfig& scenario) {
  FixedPointTrace trace;
  using clock = std::chrono::steady_clock;
  MeasureFlow mu = psi(scenario, constant_initial_flow(scenario));
  trace.iterates.push_back(mu);
  const double damp = scenario.picard.damping;
  for (int k = 0; k < scenario.picard.max_iter; ++k) {
    auto t0 = clock::now();
    MeasureFlow step = psi(scenario, mu);
    MeasureFlow next = mu;
    if (damp > 0) {
      for (std::size_t i = 0; i < mu.size(); ++i)
        next.measures[i] = mu.at(i).blend(step.at(i), 1.0 - damp);
    } else {
      next = step;
    }
    double res = dphi_metric(next, mu, scenario.phi);
    trace.residuals.push_back(res);
    trace.wallclock_ms.push_back(
        std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    trace.iterates.push_back(next);
    mu = std::move(next);
    if (res <= scenario.picard.tol_dphi) {
      trace.converged = true;
      break;
    }
  }
  trace.final_flow = mu;
  return trace;
}

PropertyReport psi_equicontinuity(const ScenarioConfig& scenario,
                                  const MeasureFlow& psi_flow, double gamma,
                                  double t0) {
  PropertyReport rep;
  double worst = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < psi_flow.size(); ++i) {
    if (psi_flow.times[i] < t0) continue;
    for (std::size_t j = i + 1; j < psi_flow.size(); ++j) {
      double gap =
          phi_norm(psi_flow.at(j).minus(psi_flow.at(i)), scenario.phi);
      double dt = psi_flow.times[j] - psi_flow.times[i];
      worst = std::max(worst, gap / std::pow(dt, 0.5 * gamma));
      ++used;
    }
  }
  rep.fitted_C = worst;
  rep.n_samples = used;
  rep.passed = std::isfinite(worst);
  return rep;
}

PropertyReport lfd_check(const MeasureFunctional& f, const Measure& m,
                         const Measure& m2) {
  if (!f.lfd) throw MissingDerivative("functional has no lfd");
  if (!m.is_probability(1e-6) || !m2.is_probability(1e-6))
    throw NotProbability("lfd_check needs probability measures");
  static const Quadrature gl = gauss_legendre(16);
  Measure diff = m.minus(m2);
  std::vector<double> terms;
  double sup_lfd = 0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
    double lam = 0.5 + 0.5 * gl.nodes[i];
    Measure mix = m2.blend(m, lam);  // lam m + (1-lam) m2
    double inner = diff.integrate(
        [&](std::span<const double> y) { return f.lfd(mix, y); });
    terms.push_back(0.5 * gl.weights[i] * inner);
    // crude sup of |lfd| over the grid for the TV bound
    std::vector<double> c(m.dim);
    for (std::size_t k = 0; k < mix.grid.ncells();
         k += std::max<std::size_t>(1, mix.grid.ncells() / 64)) {
      mix.grid.center(k, c.data());
      sup_lfd = std::max(sup_lfd, std::abs(f.lfd(mix, c)));
    }
  }
  double rhs = pairwise_sum(terms);
  double lhs = f.eval(m) - f.eval(m2);
  PropertyReport rep;
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.max_violation = std::abs(lhs - rhs);
  double tv = tv_distance(m, m2);
  rep.passed = rep.max_violation <= 1e-6 * std::max(1.0, std::abs(lhs)) &&
               std::abs(lhs) <= sup_lfd * tv + 1e-9;
  rep.fitted_C = sup_lfd;
  rep.n_samples = gl.nodes.size();
  return rep;
}

double lfd_normalization(const MeasureFunctional& f, const Measure& m) {
  if (!f.lfd) throw MissingDerivative("functional has no lfd");
  return m.integrate(
      [&](std::span<const double> y) { return f.lfd(m, y); });
}

GapReport uniqueness_gap(const ScenarioConfig& scenario, const MeasureFlow& mu,
                         const MeasureFlow& mu2, double s, double T,
                         const GapConfig& gcfg) {
  if (!mu.aligned_with(mu2)) throw GridMismatch("flows must share time grids");
  // re-seed: both flows agree at the window start
  MeasureFlow nu = mu2;
  std::size_t is = mu.left_index(s);
  nu.measures[is] = mu.at(is);
  CoefficientField fa = freeze(scenario.coeffs, mu);
  CoefficientField fb = freeze(scenario.coeffs, nu);

  KernelRequest rq;
  rq.s = s;
  rq.t_nodes = linspace(s + T / gcfg.t_nodes, s + T, gcfg.t_nodes);
  rq.x_nodes = linspace(-gcfg.x_halfwidth, gcfg.x_halfwidth, gcfg.x_starts);
  rq.ygrid = coarsen_grid(scenario.space, scenario.series.max_kernel_cells);
  SeriesConfig cfg = scenario.series;
  KernelGrid pa = heat_kernel(fa, rq, cfg);
  KernelGrid pb = heat_kernel(fb, rq, cfg);
  const double lambda = pa.cfg.lambda_report;

  double pmax = 0;
  for (double v : pa.values) pmax = std::max(pmax, v);
  const double floor = 1e-10 * pmax;
  GapReport rep;
  rep.s = s;
  rep.T = T;
  std::vector<double> yc(pa.ny());
  for (std::size_t i = 0; i < pa.ny(); ++i)
    pa.ygrid.center(i, &yc[i]);
  double eps_full = 0, eps_half = 0;
  for (std::size_t ix = 0; ix < pa.nx(); ++ix) {
    double x = pa.x_nodes[ix];
    for (std::size_t it = 0; it < pa.nt(); ++it) {
      double tau = pa.t_nodes[it] - s;
      for (std::size_t iy = 0; iy < pa.ny(); ++iy) {
        double va = pa.at(ix, it, iy), vb = pb.at(ix, it, iy);
        if (std::max(va, vb) < floor) continue;
        double u = std::abs(x - yc[iy]);
        if (lambda * u * u / tau > 45.0) continue;  // envelope underflow zone
        double ratio =
            std::abs(va - vb) / rho_radial(lambda, 0, 1, tau, u);
        eps_full = std::max(eps_full, ratio);
        if (pa.t_nodes[it] <= s + 0.5 * T + 1e-12)
          eps_half = std::max(eps_half, ratio);
      }
    }
  }
  rep.epsilon_T = eps_full;
  rep.epsilon_half = eps_half;
  rep.contraction_factor = eps_half > 0 ? eps_full / eps_half : 0.0;

  if (gcfg.log_duhamel) {
    // J0: frozen-Gaussian difference
    double j0 = 0;
    std::vector<double> xv(1), yv(1);
    for (std::size_t ix = 0; ix < pa.nx(); ++ix) {
      xv[0] = pa.x_nodes[ix];
      for (std::size_t it = 0; it < pa.nt(); ++it) {
        double t = pa.t_nodes[it];
        for (std::size_t iy = 0; iy < pa.ny(); iy += 4) {
          yv[0] = yc[iy];
          double u = std::abs(xv[0] - yv[0]);
          double tau = t - s;
          if (lambda * u * u / tau > 45.0) continue;
          double d0 = std::abs(frozen_gaussian(fa, s, xv, t, yv) -
                               frozen_gaussian(fb, s, xv, t, yv));
          j0 = std::max(j0, d0 / rho_radial(lambda, 0, 1, tau, u));
        }
      }
    }
    rep.J0 = j0;
    // J1 = (p - p~) (x) (L - L0) p0 ; J2 = p~ (x) [(L-L0) - (L~-L~0)] p0 ;
    // J3 = p~ (x) (L~ - L~0)(p0 - p~0). The evaluators are expensive, so the
    // decomposition is logged from small dedicated kernels.
    KernelRequest rqj;
    rqj.s = s;
    rqj.t_nodes = linspace(s + T / 4, s + T, 4);
    rqj.x_nodes = linspace(-gcfg.x_halfwidth, gcfg.x_halfwidth, 3);
    rqj.ygrid = coarsen_grid(scenario.space, 64);
    KernelGrid paj = heat_kernel(fa, rqj, cfg);
    KernelGrid pbj = heat_kernel(fb, rqj, cfg);
    std::vector<double> ycj(paj.ny());
    for (std::size_t i = 0; i < paj.ny(); ++i) paj.ygrid.center(i, &ycj[i]);
    KernelGrid diff = paj;
    for (std::size_t i = 0; i < diff.values.size(); ++i)
      diff.values[i] = paj.values[i] - pbj.values[i];
    SpaceTimeEvaluator qa;
    qa.endpoint_exponent = 0.5 * fa.alpha - 1.0;
    qa.left_kernel_is_delta = false;
    qa.eval = [&fa](double tau, std::span<const double> z, double t,
                    std::span<const double> y) {
      return parametrix_term(fa, tau, z, t, y);
    };
    auto sup_ratio = [&](const KernelGrid& kgr) {
      double worst = 0;
      for (std::size_t ix = 0; ix < kgr.nx(); ++ix)
        for (std::size_t it = 0; it < kgr.nt(); ++it) {
          double tau = kgr.t_nodes[it] - s;
          for (std::size_t iy = 0; iy < kgr.ny(); ++iy) {
            double u = std::abs(kgr.x_nodes[ix] - ycj[iy]);
            if (lambda * u * u / tau > 45.0) continue;
            worst = std::max(worst, std::abs(kgr.at(ix, it, iy)) /
                                        rho_radial(lambda, 0, 1, tau, u));
          }
        }
      return worst;
    };
    rep.J1 = sup_ratio(spacetime_convolve(diff, qa));
    SpaceTimeEvaluator qd;
    qd.endpoint_exponent = 0.5 * fa.alpha - 1.0;
    qd.eval = [&fa, &fb](double tau, std::span<const double> z, double t,
                         std::span<const double> y) {
      return parametrix_term(fa, tau, z, t, y) -
             parametrix_term(fb, tau, z, t, y);
    };
    rep.J2 = sup_ratio(spacetime_convolve(pbj, qd));
    SpaceTimeEvaluator q3;
    q3.endpoint_exponent = 0.5 * fa.alpha - 1.0;
    q3.eval = [&fa, &fb](double tau, std::span<const double> z, double t,
                         std::span<const double> y) {
      // (L~ - L~0) applied to (p0 - p~0)
      double va, ga[2], ha[3], vb, gb[2], hb[3];
      frozen_gaussian_derivs(fa, tau, z, t, y, &va, ga, ha);
      frozen_gaussian_derivs(fb, tau, z, t, y, &vb, gb, hb);
      double az[4], ay[4];
      fb.a_eval(tau, z, az);
      fb.a_eval(tau, y, ay);
      double out = (az[0] - ay[0]) * (ha[0] - hb[0]);
      if (fb.has_drift()) {
        double bv[2];
        fb.b_eval(tau, z, bv);
        if (std::isfinite(bv[0])) out += bv[0] * (ga[0] - gb[0]);
      }
      return out;
    };
    rep.J3 = sup_ratio(spacetime_convolve(pbj, q3));
  }
  return rep;
}

}  // namespace mkv
