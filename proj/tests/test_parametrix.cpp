#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mkvsde/parametrix.hpp"

using namespace mkv;

namespace {

CoefficientField const_coeffs(double a, bool flag_const = true) {
  CoefficientField c;
  c.dim = 1;
  c.a_eval = [a](double, std::span<const double>, double* out) { out[0] = a; };
  c.a_constant_in_x = flag_const;
  c.Lambda = 2.5;
  c.alpha = 0.5;
  return c;
}

CoefficientField holder_coeffs() {
  CoefficientField c;
  c.dim = 1;
  c.a_eval = [](double, std::span<const double> x, double* out) {
    out[0] = 0.5 * (1.0 + 0.3 * std::sin(x[0]));
  };
  c.Lambda = 3.0;
  c.alpha = 0.9;
  c.N1 = 0.2;
  return c;
}

double heat_pdf(double u, double t) {
  return std::exp(-u * u / (2 * t)) / std::sqrt(2 * M_PI * t);
}

KernelRequest basic_request(int nx, int nt, int ny, double half = 4.0) {
  KernelRequest rq;
  rq.s = 0;
  rq.t_nodes = linspace(1.0 / nt, 1.0, nt);
  // starts stay interior so the box captures the Gaussian tails
  rq.x_nodes = (nx == 1) ? std::vector<double>{0.0}
                         : linspace(-1.5, 1.5, nx);
  rq.ygrid = SpatialGrid::box1d(-half, half, ny);
  return rq;
}

}  // namespace

TEST_CASE("frozen gaussian closed forms") {
  auto c = const_coeffs(0.5);
  double x[1] = {0.7}, y[1] = {-0.3};
  double t = 0.4;
  double got = frozen_gaussian(c, 0, std::span<const double>(x, 1), t,
                               std::span<const double>(y, 1));
  CHECK(got == doctest::Approx(heat_pdf(x[0] - y[0], t)).epsilon(1e-13));

  // a(tau) = (1+tau)/2: variance t(1+t/2) (exact time integral oracle)
  CoefficientField ct;
  ct.dim = 1;
  ct.a_eval = [](double tau, std::span<const double>, double* out) {
    out[0] = 0.5 * (1.0 + tau);
  };
  ct.a_constant_in_x = true;
  double var = t * (1 + 0.5 * t);
  double expect =
      std::exp(-sqr(x[0] - y[0]) / (2 * var)) / std::sqrt(2 * M_PI * var);
  CHECK(frozen_gaussian(ct, 0, std::span<const double>(x, 1), t,
                        std::span<const double>(y, 1)) ==
        doctest::Approx(expect).epsilon(1e-12));

  // d=2, x=y, t=1, a=I/2: 1/(2 pi)
  CoefficientField c2;
  c2.dim = 2;
  c2.a_eval = [](double, std::span<const double>, double* out) {
    out[0] = 0.5;
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = 0.5;
  };
  double p2[2] = {0.3, -1.0};
  CHECK(frozen_gaussian(c2, 0, std::span<const double>(p2, 2), 1.0,
                        std::span<const double>(p2, 2)) ==
        doctest::Approx(1.0 / (2 * M_PI)).epsilon(1e-13));

  // non-SPD covariance
  CoefficientField bad;
  bad.dim = 1;
  bad.a_eval = [](double, std::span<const double>, double* out) {
    out[0] = -1.0;
  };
  CHECK_THROWS_AS(frozen_gaussian(bad, 0, std::span<const double>(x, 1), t,
                                  std::span<const double>(y, 1)),
                  EllipticityError);
}

TEST_CASE("parametrix term") {
  // constant a, no drift: Phi == 0
  auto c = const_coeffs(0.5, false);
  double z[1] = {0.4}, y[1] = {-0.2};
  CHECK(parametrix_term(c, 0.1, std::span<const double>(z, 1), 0.6,
                        std::span<const double>(y, 1)) == 0.0);

  // constant drift: Phi = c_b * d/dz p0; oracle = central difference
  CoefficientField cb = const_coeffs(0.5, false);
  cb.b_eval = [](double, std::span<const double>, double* out) {
    out[0] = 0.8;
  };
  double tau = 0.1, t = 0.6;
  double h = 1e-6;
  double zp[1] = {z[0] + h}, zm[1] = {z[0] - h};
  double fd = (frozen_gaussian(cb, tau, std::span<const double>(zp, 1), t,
                               std::span<const double>(y, 1)) -
               frozen_gaussian(cb, tau, std::span<const double>(zm, 1), t,
                               std::span<const double>(y, 1))) /
              (2 * h);
  CHECK(parametrix_term(cb, tau, std::span<const double>(z, 1), t,
                        std::span<const double>(y, 1)) ==
        doctest::Approx(0.8 * fd).epsilon(1e-6));

  // z == y kills the Holder part
  auto ch = holder_coeffs();
  double ap, bp;
  parametrix_term_parts(ch, tau, std::span<const double>(y, 1), t,
                        std::span<const double>(y, 1), &ap, &bp);
  CHECK(ap == 0.0);
  CHECK(bp == 0.0);
}

TEST_CASE("constant-coefficient collapse") {
  auto rq = basic_request(64, 16, 64);
  auto kg = heat_kernel(const_coeffs(0.5), rq);
  double worst = 0;
  for (std::size_t ix = 0; ix < kg.nx(); ++ix)
    for (std::size_t it = 0; it < kg.nt(); ++it)
      for (std::size_t iy = 0; iy < kg.ny(); ++iy) {
        double x = kg.x_nodes[ix];
        double y = kg.ygrid.lo[0] + (iy + 0.5) * kg.ygrid.cell_width(0);
        double exact = heat_pdf(x - y, kg.t_nodes[it]);
        if (exact > 1e-280)
          worst = std::max(worst, std::abs(kg.at(ix, it, iy) - exact) / exact);
      }
  CHECK(worst <= 1e-6);
  for (std::size_t n = 1; n < kg.term_sup.size(); ++n)
    CHECK(kg.term_sup[n] <= 1e-12);

  // same collapse through the generic series path
  auto kg2 = heat_kernel(const_coeffs(0.5, false), basic_request(8, 8, 64));
  for (std::size_t n = 1; n < kg2.term_sup.size(); ++n)
    CHECK(kg2.term_sup[n] <= 1e-12);
}

TEST_CASE("holder diffusion kernel: mass and Chapman-Kolmogorov") {
  auto c = holder_coeffs();
  auto rq = basic_request(16, 8, 64);
  auto kg = heat_kernel(c, rq);
  CHECK(kg.mass_defect_max <= 0.01);
  CHECK(kg.term_ratio < 1.0);

  // symmetry: a even in x, b == 0 -> p(0,x;t,y) = p(0,-x;t,-y)
  CoefficientField ce = c;
  ce.a_eval = [](double, std::span<const double> x, double* out) {
    out[0] = 0.5 * (1.0 + 0.3 * std::cos(x[0]));
  };
  auto kge = heat_kernel(ce, rq);
  const std::size_t ny = kge.ny();
  for (std::size_t it = 0; it < kge.nt(); it += 3)
    for (std::size_t ix = 0; ix < kge.nx(); ++ix) {
      std::size_t ixm = kge.nx() - 1 - ix;
      for (std::size_t iy = 0; iy + 1 < ny; iy += 7) {
        double a = kge.at(ix, it, iy);
        double b = kge.at(ixm, it, ny - 1 - iy);
        CHECK(a == doctest::Approx(b).epsilon(1e-6).scale(1.0));
      }
    }

  // compose two half-interval kernels against the direct full kernel
  KernelRequest left = rq;
  left.t_nodes = linspace(0.0625, 0.5, 8);
  auto zg = rq.ygrid;
  std::vector<double> zstarts = zg.centers1d();
  KernelRequest right;
  right.s = 0.5;
  right.t_nodes = {0.75, 1.0};
  right.x_nodes = zstarts;
  right.ygrid = zg;
  auto kl = heat_kernel(c, left);
  auto kr = heat_kernel(c, right);
  auto comp = compose_kernels(kl, kr);
  KernelRequest full = rq;
  full.t_nodes = {0.75, 1.0};
  auto kf = heat_kernel(c, full);
  double pmax = 0, dmax = 0;
  for (std::size_t i = 0; i < comp.values.size(); ++i) {
    pmax = std::max(pmax, kf.values[i]);
    dmax = std::max(dmax, std::abs(comp.values[i] - kf.values[i]));
  }
  CHECK(dmax <= 0.02 * pmax);
}

TEST_CASE("singular drift kernel keeps mass") {
  CoefficientField c = const_coeffs(0.5, false);
  c.p = 4;
  c.q = INFINITY;
  c.b_eval = [](double, std::span<const double> x, double* out) {
    double r = std::abs(x[0]);
    out[0] = (r < 1.0) ? std::pow(r, -0.25) : 0.0;
  };
  c.b_singular_points = {{0.0}};
  auto rq = basic_request(8, 8, 64);
  auto kg = heat_kernel(c, rq);
  CHECK(kg.mass_defect_max <= 0.01);
  SeriesConfig fine;
  fine.tau_nodes = 48;
  auto kg2 = heat_kernel(c, rq, fine);
  CHECK(kg2.mass_defect_max <= 0.01);
}

TEST_CASE("two-sided envelope certification") {
  auto kg = heat_kernel(const_coeffs(0.5), basic_request(32, 12, 64));
  auto rep = verify_two_sided(kg);
  CHECK(rep.lambda_upper == doctest::Approx(0.5).epsilon(0.10));
  CHECK(rep.lambda_lower == doctest::Approx(0.5).epsilon(0.10));
  CHECK(std::isfinite(rep.fitted_C));

  // scaling the kernel shifts C, not the rates
  auto scaled = kg;
  for (double& v : scaled.values) v *= 3.0;
  auto rep2 = verify_two_sided(scaled);
  CHECK(rep2.lambda_upper == doctest::Approx(rep.lambda_upper).epsilon(1e-9));
  CHECK(rep2.lambda_lower == doctest::Approx(rep.lambda_lower).epsilon(1e-9));
  CHECK(rep2.lhs_sup == doctest::Approx(3.0 * rep.lhs_sup).epsilon(1e-6));
  CHECK(rep2.rhs == doctest::Approx(rep.rhs / 3.0).epsilon(1e-6));

  auto zero = kg;
  std::fill(zero.values.begin(), zero.values.end(), 0.0);
  CHECK_THROWS_AS(verify_two_sided(zero), NoEnvelope);
}

TEST_CASE("holder certification") {
  auto c = holder_coeffs();
  // toy grid constant in t: fitted C = 0 on the time axis
  KernelGrid toy;
  toy.dim = 1;
  toy.s = 0;
  toy.t_nodes = {0.25, 0.5, 1.0};
  toy.x_nodes = {0.0};
  toy.ygrid = SpatialGrid::box1d(-1, 1, 8);
  toy.values.assign(3 * 8, 0.7);
  CHECK(verify_holder(toy, c, HolderAxis::Time, 0.2, 0.4).fitted_C == 0.0);

  auto kg = heat_kernel(c, basic_request(16, 8, 64));
  double gamma = 0.5 * std::min(c.alpha, c.gamma0());
  double lam = verify_two_sided(kg).lambda_upper * 0.8;
  auto rt = verify_holder(kg, c, HolderAxis::Time, gamma, lam);
  auto ry = verify_holder(kg, c, HolderAxis::Space, gamma, lam);
  CHECK(std::isfinite(rt.fitted_C));
  CHECK(std::isfinite(ry.fitted_C));
  CHECK(rt.fitted_C > 0);
  CHECK(ry.fitted_C > 0);
  // refinement stability: double the node density on the same range
  auto rq2 = basic_request(16, 8, 128);
  rq2.t_nodes = linspace(0.125, 1.0, 15);
  auto kg2 = heat_kernel(c, rq2);
  auto rt2 = verify_holder(kg2, c, HolderAxis::Time, gamma, lam);
  CHECK(std::abs(rt2.fitted_C - rt.fitted_C) / rt.fitted_C < 0.25);

  CHECK_THROWS_AS(verify_holder(kg, c, HolderAxis::Time, 0.95, lam),
                  ParamOutOfRange);
}

TEST_CASE("kernel stability in the coefficients") {
  auto rq = basic_request(12, 6, 64);
  SeriesConfig cfg;
  auto c = holder_coeffs();
  auto same = kernel_stability(c, c, rq, cfg, INFINITY, 0.1);
  CHECK(same.lhs_sup == 0.0);

  auto shift = [&](double eps) {
    CoefficientField cs = c;
    cs.a_eval = [eps](double, std::span<const double> x, double* out) {
      out[0] = 0.5 * (1.0 + 0.3 * std::sin(x[0])) + eps;
    };
    return kernel_stability(c, cs, rq, cfg, INFINITY, 0.1);
  };
  auto r1 = shift(0.01);
  auto r2 = shift(0.005);
  CHECK(r1.lhs_sup > 0);
  // linear-in-eps^{1-eta} response: lhs ratio ~ 2^{0.9} within 20%
  double measured = r1.lhs_sup / r2.lhs_sup;
  CHECK(std::abs(measured / std::pow(2.0, 0.9) - 1.0) < 0.2);
}

TEST_CASE("determinant perturbation lemma") {
  auto r1 = det_perturbation_check(1, 4.0, 1.0, 10000, 7);
  CHECK(r1.passed);
  CHECK(r1.n_violations == 0);
  CHECK(r1.lhs == doctest::Approx(1.0).epsilon(1e-9));  // d=1 ratio is exact

  auto r2 = det_perturbation_check(2, 4.0, 1.0, 10000, 8);
  CHECK(r2.passed);
  CHECK(r2.n_violations == 0);
  CHECK(std::isfinite(r2.fitted_C));
}

TEST_CASE("spacetime convolve") {
  KernelRequest rq = basic_request(4, 8, 64);
  rq.x_nodes = {-1.0, 0.0, 1.0};
  auto kg = heat_kernel(const_coeffs(0.5), rq);
  SpaceTimeEvaluator zero;
  zero.eval = [](double, std::span<const double>, double,
                 std::span<const double>) { return 0.0; };
  auto out = spacetime_convolve(kg, zero);
  for (double v : out.values) CHECK(v == 0.0);

  // q == 1: (p (x) 1)(t) = int_s^t mass dtau = t - s for a mass-one kernel
  SpaceTimeEvaluator one;
  one.eval = [](double, std::span<const double>, double,
                std::span<const double>) { return 1.0; };
  auto o1 = spacetime_convolve(kg, one);
  std::size_t it = kg.nt() - 1;
  CHECK(o1.at(1, it, 0) ==
        doctest::Approx(kg.t_nodes[it] - kg.s).epsilon(0.02));
}

TEST_CASE("coefficient validation") {
  auto box = SpatialGrid::box1d(-4, 4, 64);
  CHECK_NOTHROW(validate_coefficients(holder_coeffs(), box));
  CoefficientField bad = holder_coeffs();
  bad.Lambda = 1.01;  // eigenvalues leave [1/Lambda, Lambda]
  CHECK_THROWS_AS(validate_coefficients(bad, box), EllipticityError);
  CoefficientField badq = holder_coeffs();
  badq.b_eval = [](double, std::span<const double>, double* out) {
    out[0] = 0.0;
  };
  badq.p = 2;
  badq.q = 2;  // d/p + 2/q = 1.5 >= 1
  CHECK_THROWS_AS(validate_coefficients(badq, box), IndexSetError);
}
