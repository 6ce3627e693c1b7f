#pragma once

#include <span>
#include <vector>

#include "mkvsde/field.hpp"
#include "mkvsde/reports.hpp"

namespace mkv {

// eta_beta(t,x) = (sqrt(t) + |x|)^{-d-beta}
double eta_beta(double beta, double t, std::span<const double> x);
double eta_beta_radial(double beta, int dim, double t, double r);

// rho_{lambda,gamma}(t,x) = t^{(-d+gamma)/2} exp(-lambda |x|^2 / t)
double rho_profile(double lambda, double gamma, double t,
                   std::span<const double> x);
double rho_radial(double lambda, double gamma, int dim, double t, double r);

// Pinned smooth cutoff: 1 on B_1, exp(1 - 1/(1-(|x|-1)^2)) on the bridge,
// 0 outside B_2.
double cutoff_chi(double r);

struct KatoConfig {
  int s_nodes = 96;
  int y_linear = 64;
  int y_log = 224;
  double r_outer_factor = 240.0;  // outer radius = factor*sqrt(T) w/o hint
  int time_lattice = 9;
  int space_lattice = 27;
  double lattice_inflate = 2.0;
  int angular = 16;  // d = 2
  double divergence_growth = 0.2;
  double resolution_scale = 1.0;  // multiplies node counts
};

// K^beta_f(T): joint sup over a base-point lattice of the forward plus
// backward eta_beta convolutions, graded quadrature near (s,y) = 0.
// Escalates resolution once if the value is still growing; throws Divergent
// if it keeps growing by more than divergence_growth per refinement.
KatoReport kato_functional(const SpaceTimeField& f, double beta, double T,
                           const KatoConfig& cfg = {});

struct LpqConfig {
  int base_nodes = 256;
  int graded_nodes = 80;
  double r_min = 1e-6;
  int t_nodes = 33;
  double center_spacing = 0.5;
  double default_extent = 4.0;
  double divergence_growth = 0.2;
};

// Localized norm sup_z (int_0^T ||f(t,.)chi_z||_p^q dt)^{1/q}. p and q may be
// INFINITY. Runs three refinement levels and throws Divergent when the value
// keeps growing (power-law) or the increments do not contract (borderline
// logarithmic case).
double lpq_norm(const SpaceTimeField& f, double p, double q, double T,
                const LpqConfig& cfg = {});

// Prop-style certifications ------------------------------------------------

// fitted C with rho_{lambda,-beta} <= C eta_beta over a (t, |x|) log lattice
CertReport check_rho_vs_eta(double lambda, double beta, int dim,
                            int n_t = 100, int n_r = 100);

// Regresses log(K^beta_f(T)/||f||_{L^p_q(T)}) against log T and reports the
// slope next to the expected (2-beta-d/p-2/q)/2.
ScalingReport check_kvsl(const SpaceTimeField& f, double beta, double p,
                         double q, std::span<const double> T_list,
                         const KatoConfig& kcfg = {},
                         const LpqConfig& lcfg = {});

struct ConvBoundConfig {
  int tau_nodes = 48;       // per half, graded to each endpoint
  int z_nodes = 192;
  int xy_lattice = 7;
  double box_halfwidth = 4.0;
  double divergence_growth = 0.2;
};

// int_s^t int rho_{lambda,-beta'}(tau-s, x-z) |b(tau,z)|
//             rho_{2lambda,-beta}(t-tau, z-y) dz dtau   (d = 1)
double convolution_lhs(const SpaceTimeField& b, double beta,
                       double beta_prime, double lambda, double s, double t,
                       double x, double y, const ConvBoundConfig& cfg = {},
                       double scale = 1.0);

// LHS of the two-profile convolution bound against K^beta_{|b|}(t-s) *
// rho_{lambda,-beta'}(t-s, x-y); reports the max ratio over an (x,y) lattice.
CertReport check_convolution_bound(const SpaceTimeField& b, double beta,
                                   double beta_prime, double lambda, double s,
                                   double t, const ConvBoundConfig& cfg = {},
                                   const KatoConfig& kcfg = {});

}  // namespace mkv
