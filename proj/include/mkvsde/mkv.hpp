#pragma once

#include <functional>
#include <memory>
#include <string>

#include "mkvsde/flow.hpp"
#include "mkvsde/measure.hpp"
#include "mkvsde/parametrix.hpp"
#include "mkvsde/reports.hpp"
#include "mkvsde/weight.hpp"

namespace mkv {

// Distribution-dependent coefficients sigma(t,x,m), b(t,x,m). The generic
// measure-based evaluators define the dynamics; the optional summary /
// pairwise-kernel hooks give the particle oracle its O(N) fast path and are
// required to agree with the generic evaluators.
struct MkvCoefficients {
  int dim = 1;
  std::function<void(double t, std::span<const double> x, const Measure& m,
                     double* sigma)>
      sigma;  // dim x dim, row-major
  std::function<void(double t, std::span<const double> x, const Measure& m,
                     double* b)>
      b;  // optional
  // linear functional derivative of a = sigma sigma^t / 2 in m
  std::function<void(double t, std::span<const double> x, const Measure& m,
                     std::span<const double> y, double* da)>
      lfd_a;  // optional
  bool sigma_constant_in_x = false;

  // regularity metadata (A1-A4)
  double Lambda = 2.0;
  double alpha = 0.5;
  double N1 = 1.0;
  double N2 = 1.0;
  double p = 4.0;
  double q = INFINITY;
  double beta = 0.5;        // Holder exponent of lfd_a
  double lipschitz_m = 0.0; // ell bound: ||b(t,.,m)-b(t,.,m')|| <= ell ||m-m'||_phi

  // particle fast paths
  std::vector<std::function<double(const Measure&)>> summaries;
  std::function<void(double t, std::span<const double> x,
                     std::span<const double> s, double* sigma)>
      sigma_summary;  // optional
  std::function<void(double t, std::span<const double> x,
                     std::span<const double> s, double* b)>
      b_summary;  // optional
  std::function<void(double t, std::span<const double> x,
                     std::span<const double> y, double* b)>
      drift_kernel;  // optional pairwise B(t,x,y)
  bool drift_singular = false;

  bool has_b() const { return bool(b); }
};

struct PicardConfig {
  int max_iter = 15;
  double tol_dphi = 1e-3;
  double damping = 0.5;
};

struct ScenarioConfig {
  std::string name;
  std::string params_json;  // builder parameters, echoed into manifests
  MkvCoefficients coeffs;
  Measure initial_law;
  WeightFunction phi;
  std::vector<double> time_grid;
  SpatialGrid space;
  SeriesConfig series;
  PicardConfig picard;
  std::uint64_t seed = 0;
  double mass_tol = 0.02;
};

struct FixedPointTrace {
  std::vector<MeasureFlow> iterates;
  std::vector<double> residuals;
  std::vector<double> wallclock_ms;
  bool converged = false;
  MeasureFlow final_flow;
};

// sigma/b frozen along the flow (piecewise-constant-left in time); the
// returned field owns a copy of the flow.
CoefficientField freeze(const MkvCoefficients& coeffs, const MeasureFlow& mu);

// psi(mu)_t(dy) = int p^mu(0, x; t, y) xi(dx) on the scenario grids
MeasureFlow psi(const ScenarioConfig& scenario, const MeasureFlow& mu);

// constant-in-time surrogate flow of the (mollified) initial law; the Picard
// start iterate is psi applied to it
MeasureFlow constant_initial_flow(const ScenarioConfig& scenario);

FixedPointTrace picard_iterate(const ScenarioConfig& scenario);

// equicontinuity surrogate: sup over t0 <= t1 < t2 of
// ||psi_t2 - psi_t1||_phi / |t2 - t1|^{gamma/2}
PropertyReport psi_equicontinuity(const ScenarioConfig& scenario,
                                  const MeasureFlow& psi_flow, double gamma,
                                  double t0);

struct MeasureFunctional {
  std::function<double(const Measure&)> eval;
  std::function<double(const Measure&, std::span<const double> y)> lfd;
};

// verifies f(m) - f(m') against the mixture integral of delta f / delta m and
// the total-variation bound
PropertyReport lfd_check(const MeasureFunctional& f, const Measure& m,
                         const Measure& m2);
// |int lfd(m)(y) m(dy)| (normalization convention)
double lfd_normalization(const MeasureFunctional& f, const Measure& m);

struct GapConfig {
  int t_nodes = 10;
  int x_starts = 9;
  double x_halfwidth = 1.5;
  bool log_duhamel = true;
};

// epsilon(T) = sup |p - p~| / rho_lambda over [s, s+T] for the kernels frozen
// along mu and mu2, after re-seeding mu2_s := mu_s.
GapReport uniqueness_gap(const ScenarioConfig& scenario, const MeasureFlow& mu,
                         const MeasureFlow& mu2, double s, double T,
                         const GapConfig& gcfg = {});

}  // namespace mkv
