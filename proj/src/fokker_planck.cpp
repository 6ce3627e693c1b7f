#include "mkvsde/fokker_planck.hpp"

#include <algorithm>
#include <cmath>

#include "mkvsde/kato.hpp"

namespace mkv {

namespace {

// Thomas solve for (I - r L) v' = rhs with L the zero-flux flux-form
// diffusion operator, (L v)_i = (w_{i+1} - w_i - (w_i - w_{i-1}))/dx^2,
// w_i = a_i v_i and one-sided stencils at the box.
void cn_diffusion(std::vector<double>* v, const std::vector<double>& a,
                  double dx, double dt) {
  const int n = int(v->size());
  const double r = 0.5 * dt / (dx * dx);
  std::vector<double> rhs(n), dl(n), dm(n), du(n);
  for (int i = 0; i < n; ++i) {
    double wl = (i > 0) ? a[i - 1] * (*v)[i - 1] : 0.0;
    double wc = a[i] * (*v)[i];
    double wr = (i + 1 < n) ? a[i + 1] * (*v)[i + 1] : 0.0;
    double flux_r = (i + 1 < n) ? (wr - wc) : 0.0;
    double flux_l = (i > 0) ? (wc - wl) : 0.0;
    rhs[i] = (*v)[i] + r * (flux_r - flux_l);
    // implicit side
    dm[i] = 1.0;
    dl[i] = du[i] = 0.0;
    if (i + 1 < n) {
      dm[i] += r * a[i];
      du[i] -= r * a[i + 1];
    }
    if (i > 0) {
      dm[i] += r * a[i];
      dl[i] -= r * a[i - 1];
    }
  }
  // Thomas
  for (int i = 1; i < n; ++i) {
    double m = dl[i] / dm[i - 1];
    dm[i] -= m * du[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  (*v)[n - 1] = rhs[n - 1] / dm[n - 1];
  for (int i = n - 2; i >= 0; --i)
    (*v)[i] = (rhs[i] - du[i] * (*v)[i + 1]) / dm[i];
}

}  // namespace

FpeState nfpe_init(const ScenarioConfig& scenario) {
  FpeState st;
  st.t = 0;
  MeasureFlow init = constant_initial_flow(scenario);
  st.density = init.at(0);
  return st;
}

FpeState nfpe_step(const FpeState& state, const MkvCoefficients& coeffs,
                   double dt) {
  if (coeffs.dim != 1)
    throw Unsupported("the finite-volume solver is implemented for d = 1");
  if (dt < 0) throw ParamOutOfRange("dt must be nonnegative");
  FpeState out = state;
  if (dt == 0) return out;
  const Measure& mu = state.density;
  const int n = mu.grid.cells[0];
  const double dx = mu.grid.cell_width(0);
  // freeze coefficients at the current measure
  std::vector<double> a(n), bface(n + 1, 0.0);
  std::vector<double> xc = mu.grid.centers1d();
  double sig;
  double xv[1];
  for (int i = 0; i < n; ++i) {
    xv[0] = xc[i];
    coeffs.sigma(state.t, std::span<const double>(xv, 1), mu, &sig);
    a[i] = 0.5 * sig * sig;
  }
  double bmax = 0;
  if (coeffs.b) {
    for (int i = 1; i < n; ++i) {
      xv[0] = mu.grid.lo[0] + i * dx;  // interior face
      double bv;
      coeffs.b(state.t, std::span<const double>(xv, 1), mu, &bv);
      if (!std::isfinite(bv)) bv = 0;  // node avoidance
      bface[i] = bv;
      bmax = std::max(bmax, std::abs(bv));
    }
  }
  out.cfl_dt = bmax > 0 ? 0.9 * dx / bmax : INFINITY;
  if (dt > out.cfl_dt)
    throw CFLViolation("advective CFL violated: dt > 0.9 dx / max|b|");

  std::vector<double> v = mu.values;
  if (bmax > 0) {
    // explicit upwind advection in conservative form
    std::vector<double> flux(n + 1, 0.0);
    for (int i = 1; i < n; ++i)
      flux[i] = bface[i] > 0 ? bface[i] * v[i - 1] : bface[i] * v[i];
    for (int i = 0; i < n; ++i) v[i] -= dt / dx * (flux[i + 1] - flux[i]);
  }
  cn_diffusion(&v, a, dx, dt);
  double mn = 0;
  for (double& w : v) {
    mn = std::min(mn, w);
    if (!std::isfinite(w)) throw NonFiniteState("non-finite FPE state");
    if (w < 0) w = 0;
  }
  out.min_value = std::min(state.min_value, mn);
  out.density = Measure::grid_density(mu.grid, std::move(v));
  out.density.gauss.reset();
  out.t = state.t + dt;
  out.last_dt = dt;
  return out;
}

MeasureFlow solve_nfpe(const ScenarioConfig& scenario, const NfpeOptions& opt) {
  FpeState st = nfpe_init(scenario);
  std::vector<Measure> out;
  std::size_t next = 0;
  const auto& grid_times = scenario.time_grid;
  double dt_base = opt.dt;
  while (next < grid_times.size()) {
    double target = grid_times[next];
    while (st.t < target - 1e-12) {
      double dt = std::min(dt_base, target - st.t);
      for (;;) {
        try {
          st = nfpe_step(st, scenario.coeffs, dt);
          break;
        } catch (const CFLViolation&) {
          dt *= 0.5;
          if (dt < 1e-8) throw;
        }
      }
    }
    out.push_back(st.density);
    ++next;
  }
  return MeasureFlow::make(grid_times, std::move(out), true, 1e-4);
}

PropertyReport narrow_continuity_check(const MeasureFlow& flow,
                                       double jump_tol) {
  std::vector<std::function<double(std::span<const double>)>> battery = {
      [](std::span<const double>) { return 1.0; },
      [](std::span<const double> x) { return std::sin(x[0]); },
      [](std::span<const double> x) { return std::cos(x[0]); },
      [](std::span<const double> x) { return std::tanh(x[0]); },
      [](std::span<const double> x) { return 1.0 / (1.0 + x[0] * x[0]); },
  };
  PropertyReport rep;
  double worst = 0;
  for (const auto& f : battery) {
    double prev = flow.at(0).integrate(f);
    for (std::size_t k = 1; k < flow.size(); ++k) {
      double cur = flow.at(k).integrate(f);
      worst = std::max(worst, std::abs(cur - prev));
      prev = cur;
    }
  }
  rep.max_violation = worst;
  rep.passed = worst <= jump_tol;
  rep.n_samples = battery.size() * (flow.size() - 1);
  return rep;
}

CertReport krylov_check(const MeasureFlow& flow, const SpaceTimeField& f,
                        double p, double q) {
  double rhs = lpq_norm(f, p, q, 1.0);
  auto slice = [&](std::size_t k) {
    double t = flow.times[k];
    return flow.at(k).integrate([&](std::span<const double> x) {
      double v = std::abs(f(t, x));
      return std::isfinite(v) ? v : 0.0;
    });
  };
  double acc = flow.times.front() * slice(0);  // left stub of (0, t_1]
  double prev = slice(0);
  for (std::size_t k = 1; k < flow.size(); ++k) {
    double cur = slice(k);
    acc += 0.5 * (cur + prev) * (flow.times[k] - flow.times[k - 1]);
    prev = cur;
  }
  CertReport rep;
  rep.lhs_sup = acc;
  rep.rhs = rhs;
  rep.ratio = rhs > 0 ? acc / rhs : 0.0;
  rep.fitted_C = rep.ratio;
  return rep;
}

}  // namespace mkv
