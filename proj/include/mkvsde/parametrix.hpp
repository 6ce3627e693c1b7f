#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mkvsde/field.hpp"
#include "mkvsde/measure.hpp"
#include "mkvsde/reports.hpp"

namespace mkv {

// Coefficients of the linear SDE dX = b dt + sigma dW with a = sigma sigma^t/2
// plus the admissibility metadata (ellipticity, Holder class, drift indices).
struct CoefficientField {
  int dim = 1;
  // symmetric dim x dim matrix, row-major
  std::function<void(double t, std::span<const double> x, double* a)> a_eval;
  // drift vector; empty function means b == 0
  std::function<void(double t, std::span<const double> x, double* b)> b_eval;
  bool a_constant_in_x = false;
  double Lambda = 2.0;
  double alpha = 0.5;
  double N1 = 1.0;
  double N2 = 1.0;
  double p = 4.0;
  double q = INFINITY;
  std::vector<std::vector<double>> b_singular_points;

  bool has_drift() const { return bool(b_eval); }
  double gamma0() const {
    double invp = std::isfinite(p) ? 1 / p : 0, invq = std::isfinite(q) ? 1 / q : 0;
    return 1.0 - dim * invp - 2.0 * invq;
  }
};

// Samples ellipticity, the Holder quotient of a and the drift index set;
// throws AssumptionViolation / EllipticityError / IndexSetError.
void validate_coefficients(const CoefficientField& c, const SpatialGrid& box,
                           int t_samples = 5, double sample_tol = 0.05);

struct SeriesConfig {
  int n_trunc = 6;
  double lambda_report = 0.0;  // 0: derive 0.2/Lambda from the coefficients
  int tau_nodes = 24;          // internal lattice size per window
  double t_window = 1.0;
  double t_window_min = 1.0 / 64;
  double ratio_accept = 0.5;
  double ratio_fail = 0.9;
  double tau_grading = 1.6;
  double neg_tol = 1e-4;  // relative to the kernel sup
  double mass_tol = 0.01;
  bool renormalize_mass = false;
  double gh_width_cells = 2.5;  // switch to Gauss-Hermite below this width
  // series kernels that build Phi tables cap their spatial grid at this many
  // cells per axis; callers rebin the results up to their measure grids
  int max_kernel_cells = 128;
};

// same box with at most max_cells per axis (halving the count, so rebinning
// back is exact overlap redistribution)
SpatialGrid coarsen_grid(const SpatialGrid& g, int max_cells);

struct KernelGrid {
  int dim = 1;
  double s = 0;
  std::vector<double> t_nodes;
  std::vector<double> x_nodes;  // nx * dim
  SpatialGrid ygrid;
  std::vector<double> values;  // [ix][it][iy]
  // diagnostics
  std::vector<double> term_sup;  // per series order, max over windows
  double term_ratio = 0;
  double tail_estimate = 0;
  double max_clip = 0;
  double mass_defect_max = 0;
  int windows_used = 1;
  SeriesConfig cfg;

  std::size_t nx() const { return x_nodes.size() / dim; }
  std::size_t nt() const { return t_nodes.size(); }
  std::size_t ny() const { return ygrid.ncells(); }
  double at(std::size_t ix, std::size_t it, std::size_t iy) const {
    return values[(ix * nt() + it) * ny() + iy];
  }
  double mass(std::size_t ix, std::size_t it) const;
  // marginal density sum_x xi_w * p(s,x;t,.) as a grid measure
  Measure marginal(const std::vector<double>& xi_weights, std::size_t it) const;
};

struct KernelRequest {
  double s = 0;
  std::vector<double> t_nodes;
  std::vector<double> x_nodes;
  SpatialGrid ygrid;
};

// Frozen-coefficient Gaussian p0(s,x;t,y) with A_{s,t}(y) = int_s^t a(tau,y)
// dtau (mass-one normalization, covariance 2A).
double frozen_gaussian(const CoefficientField& c, double s,
                       std::span<const double> x, double t,
                       std::span<const double> y);

// p0 with its first and second derivatives in the space argument (hess is
// packed [h00] / [h00, h01, h11]).
void frozen_gaussian_derivs(const CoefficientField& c, double s,
                            std::span<const double> x, double t,
                            std::span<const double> y, double* value,
                            double* grad, double* hess);

// (L - L0) p0 at (tau, z; t, y), split into the Holder part and drift part.
void parametrix_term_parts(const CoefficientField& c, double tau,
                           std::span<const double> z, double t,
                           std::span<const double> y, double* a_part,
                           double* b_part);
double parametrix_term(const CoefficientField& c, double tau,
                       std::span<const double> z, double t,
                       std::span<const double> y);

// Truncated parametrix series, with adaptive window halving and
// Chapman-Kolmogorov composition across windows.
KernelGrid heat_kernel(const CoefficientField& c, const KernelRequest& req,
                       const SeriesConfig& cfg = {});

// Evolves a start density rho0 (cell averages on req.ygrid at time req.s)
// through the same windowed series; the result has a single virtual start,
// values[0][it][iy] = (rho0 P)(t, y). The series is linear in the start, so
// this costs one start instead of one per grid cell.
KernelGrid evolve_density(const CoefficientField& c, const KernelRequest& req,
                          const std::vector<double>& rho0,
                          const SeriesConfig& cfg = {});

// Generic space-time convolution of kernel-grid values against an evaluator
// q(tau,z;t,y) with endpoint behavior (t-tau)^{endpoint_exponent}; used by
// the Chapman-Kolmogorov tests and the Duhamel diagnostics.
struct SpaceTimeEvaluator {
  std::function<double(double tau, std::span<const double> z, double t,
                       std::span<const double> y)>
      eval;
  double endpoint_exponent = 0.0;
  // left kernels that concentrate to delta_x at tau -> s get a sifting
  // endpoint term; difference kernels (p - p~ -> 0) must disable it
  bool left_kernel_is_delta = true;
};
KernelGrid spacetime_convolve(const KernelGrid& p, const SpaceTimeEvaluator& q);

// discrete Chapman-Kolmogorov composition at the shared time w = right.s
KernelGrid compose_kernels(const KernelGrid& left, const KernelGrid& right);

CertReport verify_two_sided(const KernelGrid& kg, double fit_tol = 0.05,
                            double reliability_floor = 1e-8);

enum class HolderAxis { Time, Space };
CertReport verify_holder(const KernelGrid& kg, const CoefficientField& c,
                         HolderAxis axis, double gamma, double lambda,
                         double reliability_floor = 1e-8);

CertReport kernel_stability(const CoefficientField& a, const CoefficientField& b,
                            const KernelRequest& req, const SeriesConfig& cfg,
                            double r, double eta);

PropertyReport det_perturbation_check(int dim, double Lambda, double a_scale,
                                      int n_samples, std::uint64_t seed);

}  // namespace mkv
