#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mkvsde/kato.hpp"

using namespace mkv;

namespace {

double eta1(double beta, double t, double x) {
  double xv[1] = {x};
  return eta_beta(beta, t, std::span<const double>(xv, 1));
}

// fine-quadrature oracle for ||chi||_{L^p} on [-2, 2]
double chi_norm_p(double p) {
  const int n = 1 << 18;
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    double x = -2.0 + 4.0 * (i + 0.5) / n;
    acc += std::pow(cutoff_chi(x), p) * 4.0 / n;
  }
  return std::pow(acc, 1.0 / p);
}

}  // namespace

TEST_CASE("eta and rho pointwise") {
  CHECK(eta1(0, 1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(eta1(1, 0.25, 0) == doctest::Approx(4.0).epsilon(1e-15));
  double x2[2] = {0.3, 0.4};
  CHECK(eta_beta(1, 0.25, std::span<const double>(x2, 2)) ==
        doctest::Approx(1.0).epsilon(1e-15));

  double z[1] = {0.0}, o[1] = {1.0};
  CHECK(rho_profile(1, 0, 1, std::span<const double>(z, 1)) ==
        doctest::Approx(1.0));
  CHECK(rho_profile(1, 0, 1, std::span<const double>(o, 1)) ==
        doctest::Approx(std::exp(-1.0)));
  CHECK(rho_profile(2, -1, 4, std::span<const double>(z, 1)) ==
        doctest::Approx(0.25));

  CHECK_THROWS_AS(eta1(1, 0.0, 0), DomainError);
  CHECK_THROWS_AS(rho_profile(0.0, 0, 1, std::span<const double>(z, 1)),
                  DomainError);
  CHECK_THROWS_AS(rho_profile(1, 0, -1, std::span<const double>(z, 1)),
                  DomainError);

  // positivity / monotone decay in |x|, exact t scaling on the x = 0 ray
  for (double t : {0.01, 0.1, 1.0}) {
    double prev_e = 1e300, prev_r = 1e300;
    for (double r : {0.0, 0.2, 0.7, 1.9, 5.0}) {
      double e = eta_beta_radial(1, 1, t, r);
      double rr = rho_radial(1, 0.5, 1, t, r);
      CHECK(e > 0);
      CHECK(rr >= 0);  // underflows to 0 in the far tail
      if (r * r <= 30 * t) CHECK(rr > 0);
      CHECK(e <= prev_e);
      CHECK(rr <= prev_r);
      prev_e = e;
      prev_r = r == 0 ? rr : prev_r;
    }
    CHECK(rho_radial(1, 0.5, 1, t, 0) ==
          doctest::Approx(std::pow(t, 0.5 * (-1 + 0.5))).epsilon(1e-12));
  }
}

TEST_CASE("kato functional closed forms") {
  // f == 0
  auto zero = SpaceTimeField::constant(1, 0.0);
  CHECK(kato_functional(zero, 1, 0.5).value == 0.0);

  // f == 1 with unbounded time support: K^1(T) = 8 sqrt(T) in d = 1
  auto one = SpaceTimeField::constant(1, 1.0);
  for (double T : {0.0625, 0.25, 1.0}) {
    auto rep = kato_functional(one, 1, T);
    CHECK(rep.value == doctest::Approx(8.0 * std::sqrt(T)).epsilon(0.01));
    CHECK(rep.forward_part ==
          doctest::Approx(4.0 * std::sqrt(T)).epsilon(0.01));
    CHECK(rep.value ==
          doctest::Approx(rep.forward_part + rep.backward_part));
  }

  // indicator of B_1, time support [0,1]: closed-form oracle uses the exact
  // inner integral int_{-1}^{1} (sqrt(s)+|y|)^{-2} dy = 2/sqrt(s) - 2/(sqrt(s)+1)
  // so each full direction equals 4 log(1 + sqrt(T)).
  auto ind = SpaceTimeField::indicator_ball(1, 1.0);
  double T = 0.25;
  double oracle = 8.0 * std::log(1.0 + std::sqrt(T));
  CHECK(kato_functional(ind, 1, T).value ==
        doctest::Approx(oracle).epsilon(0.015));

  // monotone in T
  double prev = 0;
  for (double Tm : {0.04, 0.16, 0.36, 0.64, 1.0}) {
    double v = kato_functional(ind, 1, Tm).value;
    CHECK(v >= prev - 1e-9);
    prev = v;
  }
  // monotone in |f|: indicator <= constant one
  CHECK(kato_functional(ind, 1, 0.25).value <=
        kato_functional(one, 1, 0.25).value * 1.01);
}

TEST_CASE("lpq norm") {
  auto zero = SpaceTimeField::constant(1, 0.0, 0.0, 1.0);
  CHECK(lpq_norm(zero, 2, 4, 1.0) == 0.0);

  // constant: c * ||chi||_p * T^{1/q}
  auto c3 = SpaceTimeField::constant(1, 3.0, 0.0, 1.0);
  double expect = 3.0 * chi_norm_p(2) * std::pow(0.5, 0.25);
  CHECK(lpq_norm(c3, 2, 4, 0.5) == doctest::Approx(expect).epsilon(0.01));

  // borderline divergence |x|^{-1/2}, p = 2 (log case) must raise
  auto sing = SpaceTimeField::power_singularity(1, 0.5, 1.0);
  CHECK_THROWS_AS(lpq_norm(sing, 2, 4, 1.0), Divergent);

  // integrable case |x|^{-0.2}, p = 2: finite, matches a fine-grid oracle
  auto ok = SpaceTimeField::power_singularity(1, 0.2, 1.0);
  double v = lpq_norm(ok, 2, INFINITY, 1.0);
  const int n = 1 << 20;
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    double x = (i + 0.5) / n;  // chi == 1 on the support B_1
    acc += 2.0 * std::pow(x, -0.4) / n;
  }
  CHECK(v == doctest::Approx(std::sqrt(acc)).epsilon(0.02));

  // triangle inequality
  auto f = SpaceTimeField::indicator_ball(1, 1.0);
  auto g = SpaceTimeField::constant(1, 0.5, 0.0, 1.0);
  SpaceTimeField fg;
  fg.dim = 1;
  fg.time_lo = 0;
  fg.time_hi = 1;
  fg.time_independent = true;
  fg.eval = [&](double t, std::span<const double> x) {
    return f(t, x) + g(t, x);
  };
  CHECK(lpq_norm(fg, 2, 4, 1.0) <=
        lpq_norm(f, 2, 4, 1.0) + lpq_norm(g, 2, 4, 1.0) + 1e-6);
}

TEST_CASE("prop 2.1(i): rho vs eta") {
  auto rep = check_rho_vs_eta(1.0, 0.0, 1, 10, 10);
  CHECK(std::isfinite(rep.fitted_C));
  // at (t,x) = (1,0) the ratio is exactly 1; fitted C >= 1
  CHECK(rep.fitted_C >= 1.0);

  auto a = check_rho_vs_eta(1.0, 1.0, 1, 60, 60);
  auto b = check_rho_vs_eta(1.0, 1.0, 1, 240, 240);
  CHECK(std::isfinite(a.fitted_C));
  CHECK(std::abs(b.fitted_C - a.fitted_C) / a.fitted_C < 0.05);
}

TEST_CASE("prop 2.1(ii): K vs L scaling") {
  // constant field in L^inf_inf: raw slope 1/2 against K = 8 sqrt(T)
  auto one = SpaceTimeField::constant(1, 1.0);
  std::vector<double> Ts = {0.01, 0.0316, 0.1, 0.316, 1.0};
  auto rep = check_kvsl(one, 1, INFINITY, INFINITY, Ts);
  CHECK(rep.slope == doctest::Approx(0.5).epsilon(0.06));
  CHECK(rep.slope_expected == doctest::Approx(0.5));

  auto zero = SpaceTimeField::constant(1, 0.0);
  CHECK(check_kvsl(zero, 1, INFINITY, INFINITY, Ts).zero_field);

  // index set violation
  auto ind = SpaceTimeField::indicator_ball(1, 1.0);
  CHECK_THROWS_AS(check_kvsl(ind, 1, 2.0, 2.0, Ts), IndexSetError);

  // the acceptance setup: indicator, beta=1, (p,q)=(4,4)
  auto r2 = check_kvsl(ind, 1, 4.0, 4.0, Ts);
  CHECK(r2.slope_expected == doctest::Approx(0.125));
  CHECK(std::abs(r2.slope - 0.125) < 0.05);
  CHECK(std::isfinite(r2.fitted_C));
}

TEST_CASE("prop 2.1(iii): convolution bound") {
  auto zero = SpaceTimeField::constant(1, 0.0, 0.0, 1.0);
  auto rz = check_convolution_bound(zero, 0, 0, 1.0, 0.0, 0.5);
  CHECK(rz.ratio == 0.0);

  auto one = SpaceTimeField::constant(1, 1.0, 0.0, 1.0);
  auto r1 = check_convolution_bound(one, 0, 0, 1.0, 0.0, 0.5);
  CHECK(std::isfinite(r1.fitted_C));
  CHECK(r1.fitted_C > 0);

  // brute-force oracle at x = y = 0 for even b: dense midpoint Riemann sum
  double s = 0, t = 0.5, lambda = 1.0;
  double oracle = 0;
  const int nt = 4000, nz = 4000;
  for (int i = 0; i < nt; ++i) {
    double tau = s + (t - s) * (i + 0.5) / nt;
    double row = 0;
    for (int j = 0; j < nz; ++j) {
      double z = -6.0 + 12.0 * (j + 0.5) / nz;
      row += rho_radial(lambda, 0, 1, tau - s, std::abs(z)) *
             rho_radial(2 * lambda, 0, 1, t - tau, std::abs(z)) * 12.0 / nz;
    }
    oracle += row * (t - s) / nt;
  }
  double lhs = convolution_lhs(one, 0, 0, lambda, s, t, 0, 0);
  CHECK(lhs == doctest::Approx(oracle).epsilon(0.01));
}
