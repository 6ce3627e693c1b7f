#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mkvsde/fokker_planck.hpp"
#include "mkvsde/scenarios.hpp"

using namespace mkv;

namespace {

double l1_against_gaussian(const Measure& m, double mean, double var) {
  auto exact = Measure::gaussian1d(mean, var, m.grid);
  return tv_distance(m, exact);
}

ScenarioConfig heat_scenario(int cells) {
  auto sc = build_scenario(
      "constant", "{\"sigma\": 1.0, \"initial\": \"gaussian\", "
                  "\"initial_var\": 0.04, \"cells\": " +
                      std::to_string(cells) + "}");
  return sc;
}

}  // namespace

TEST_CASE("heat equation benchmark") {
  auto sc = heat_scenario(512);
  NfpeOptions opt;
  opt.dt = 5e-4;
  auto flow = solve_nfpe(sc, opt);
  // exact solution: N(0, 0.04 + t)
  for (std::size_t k = 0; k < flow.size(); ++k) {
    double t = flow.times[k];
    if (t < 0.2) continue;
    CHECK(l1_against_gaussian(flow.at(k), 0.0, 0.04 + t) <= 1e-3);
  }
  // conservation over the full solve
  for (std::size_t k = 0; k < flow.size(); ++k)
    CHECK(std::abs(flow.at(k).total_mass() - 1.0) <= 1e-6);
}

TEST_CASE("convergence order of the diffusion scheme") {
  NfpeOptions opt;
  opt.dt = 2e-4;
  auto e_at = [&](int cells) {
    auto sc = heat_scenario(cells);
    auto flow = solve_nfpe(sc, opt);
    return l1_against_gaussian(flow.at(flow.size() - 1), 0.0, 1.04);
  };
  double e128 = e_at(128), e256 = e_at(256);
  CHECK(e128 / e256 >= 3.5);
}

TEST_CASE("constant drift translates the solution") {
  auto sc = build_scenario(
      "constant",
      "{\"sigma\": 1.0, \"b\": 0.5, \"initial\": \"gaussian\", "
      "\"initial_var\": 0.04, \"cells\": 512}");
  NfpeOptions opt;
  opt.dt = 5e-4;
  auto flow = solve_nfpe(sc, opt);
  for (std::size_t k = 0; k < flow.size(); ++k) {
    double t = flow.times[k];
    if (t < 0.5) continue;
    double mean = flow.at(k).integrate(
        [](std::span<const double> x) { return x[0]; });
    CHECK(std::abs(mean - 0.5 * t) <= sc.space.cell_width(0));
  }
}

TEST_CASE("single step mechanics") {
  auto sc = heat_scenario(128);
  auto st = nfpe_init(sc);
  auto same = nfpe_step(st, sc.coeffs, 0.0);
  CHECK(same.density.values == st.density.values);
  auto step = nfpe_step(st, sc.coeffs, 1e-3);
  CHECK(std::abs(step.density.total_mass() - st.density.total_mass()) <=
        1e-10);
  CHECK(step.min_value >= -1e-10);

  // CFL violation with a strong drift and a large step
  ScenarioConfig bad = sc;
  bad.coeffs.b = [](double, std::span<const double>, const Measure&,
                    double* out) { out[0] = 50.0; };
  CHECK_THROWS_AS(nfpe_step(st, bad.coeffs, 1e-2), CFLViolation);
}

TEST_CASE("measure-independent solve matches the parametrix marginal") {
  auto sc = build_scenario("holder", "{\"initial_var\": 0.25}");
  NfpeOptions opt;
  opt.dt = 1e-3;
  auto fpe = solve_nfpe(sc, opt);
  auto kernel_flow = psi(sc, constant_initial_flow(sc));
  for (std::size_t k = 0; k < fpe.size(); ++k) {
    if (fpe.times[k] < 0.2) continue;
    CHECK(tv_distance(fpe.at(k), kernel_flow.at(k)) <= 0.05);
  }
  auto nc = narrow_continuity_check(fpe, 0.05);
  CHECK(nc.passed);
}

TEST_CASE("example 3 nonlinear solve stays gaussian") {
  auto sc = build_scenario("example3");
  // seed at N(0, t0) and march the nonlinear equation
  double t0 = 0.05;
  NfpeOptions opt;
  opt.dt = 5e-4;
  FpeState st;
  st.t = t0;
  st.density = Measure::gaussian1d(0.0, t0, sc.space);
  std::vector<double> checks = {0.25, 0.5, 1.0};
  std::size_t next = 0;
  while (next < checks.size()) {
    double target = checks[next];
    while (st.t < target - 1e-12)
      st = nfpe_step(st, sc.coeffs, std::min(opt.dt, target - st.t));
    CHECK(l1_against_gaussian(st.density, 0.0, st.t) <= 0.02);
    ++next;
  }
}

TEST_CASE("krylov estimate check") {
  auto sc = heat_scenario(256);
  NfpeOptions opt;
  opt.dt = 1e-3;
  auto flow = solve_nfpe(sc, opt);
  auto zero = SpaceTimeField::constant(1, 0.0, 0.0, 1.0);
  CHECK(krylov_check(flow, zero, 4, INFINITY).lhs_sup == 0.0);
  auto one = SpaceTimeField::constant(1, 1.0, 0.0, 1.0);
  auto r1 = krylov_check(flow, one, 4, INFINITY);
  CHECK(r1.lhs_sup == doctest::Approx(1.0).epsilon(0.01));
  // integrable singular field: finite and stable under grid refinement
  // (p = 2 keeps |x|^{-1/4} inside L^p; p = 4 is exactly the log-divergent
  // boundary and must be rejected by the norm)
  auto f = SpaceTimeField::power_singularity(1, 0.25, 1.0);
  CHECK_THROWS_AS(krylov_check(flow, f, 4, INFINITY), Divergent);
  auto ra = krylov_check(flow, f, 2, INFINITY);
  auto sc2 = heat_scenario(512);
  auto flow2 = solve_nfpe(sc2, opt);
  auto rb = krylov_check(flow2, f, 2, INFINITY);
  CHECK(std::isfinite(ra.ratio));
  CHECK(std::abs(ra.lhs_sup - rb.lhs_sup) / ra.lhs_sup <= 0.1);
}
