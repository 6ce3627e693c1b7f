#pragma once

#include "mkvsde/field.hpp"
#include "mkvsde/mkv.hpp"

namespace mkv {

struct FpeState {
  Measure density;  // grid representation
  double t = 0;
  double last_dt = 0;
  double cfl_dt = 0;      // advective limit computed at the last step
  double min_value = 0;   // most negative cell seen before clipping
};

FpeState nfpe_init(const ScenarioConfig& scenario);

// One step of d_t mu = d_xx(a mu) - d_x(b mu): Crank-Nicolson diffusion in
// conservative flux form (zero-flux box), explicit upwind advection, with
// the coefficients frozen at the current measure.
FpeState nfpe_step(const FpeState& state, const MkvCoefficients& coeffs,
                   double dt);

struct NfpeOptions {
  double dt = 1e-3;
  double jump_tol = 0.05;  // narrow-continuity surrogate bound
};

MeasureFlow solve_nfpe(const ScenarioConfig& scenario,
                       const NfpeOptions& opt = {});

// max jump of <f, mu_t> between adjacent nodes over a bounded test battery
PropertyReport narrow_continuity_check(const MeasureFlow& flow,
                                       double jump_tol = 0.05);

// int_0^1 <|f|, mu_t> dt against C ||f||_{L^p_q}
CertReport krylov_check(const MeasureFlow& flow, const SpaceTimeField& f,
                        double p, double q);

}  // namespace mkv
