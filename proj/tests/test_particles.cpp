#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mkvsde/particles.hpp"
#include "mkvsde/scenarios.hpp"

using namespace mkv;

namespace {

double ks_against_normal(std::vector<double> xs, double var) {
  std::sort(xs.begin(), xs.end());
  double worst = 0;
  const double sd = std::sqrt(var);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double F = 0.5 * std::erfc(-xs[i] / (sd * std::sqrt(2.0)));
    worst = std::max(worst, std::abs(F - double(i + 1) / xs.size()));
    worst = std::max(worst, std::abs(F - double(i) / xs.size()));
  }
  return worst;
}

double sample_var(const std::vector<double>& xs) {
  double m = 0;
  for (double x : xs) m += x;
  m /= xs.size();
  double v = 0;
  for (double x : xs) v += sqr(x - m);
  return v / (xs.size() - 1);
}

}  // namespace

TEST_CASE("brownian law and reproducibility") {
  auto sc = build_scenario("constant");
  ParticleSystemConfig pc;
  pc.N = 100000;
  pc.dt = 1e-2;
  pc.seed = 2024;
  pc.record_times = {0.25, 1.0};
  auto flow = simulate(sc, pc);
  REQUIRE(flow.times.size() == 2);
  // empirical law ~ N(0, t): 99% KS band 1.63/sqrt(N)
  for (std::size_t k = 0; k < 2; ++k)
    CHECK(ks_against_normal(flow.states[k], flow.times[k]) <=
          1.63 / std::sqrt(double(pc.N)));

  // bit-identical trajectories for a fixed seed, any thread count
  auto again = simulate(sc, pc);
  CHECK(again.states[1] == flow.states[1]);
  set_max_threads(1);
  auto serial = simulate(sc, pc);
  set_max_threads(0);
  CHECK(serial.states[1] == flow.states[1]);
}

TEST_CASE("zero diffusion keeps particles put") {
  ScenarioConfig sc = build_scenario("constant");
  sc.coeffs.sigma = [](double, std::span<const double>, const Measure&,
                       double* out) { out[0] = 0.0; };
  sc.coeffs.sigma_summary = nullptr;
  sc.coeffs.summaries.clear();
  double x0[1] = {0.7};
  sc.initial_law = Measure::dirac(std::span<const double>(x0, 1));
  ParticleSystemConfig pc;
  pc.N = 500;
  pc.dt = 1e-2;
  pc.record_times = {1.0};
  auto flow = simulate(sc, pc);
  for (double x : flow.states[0]) CHECK(x == 0.7);
}

TEST_CASE("law convergence in N") {
  auto sc = build_scenario("constant");
  std::vector<double> med;
  for (std::size_t N : {std::size_t(1000), std::size_t(10000),
                        std::size_t(100000)}) {
    std::vector<double> ks;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      ParticleSystemConfig pc;
      pc.N = N;
      pc.dt = 1e-2;
      pc.seed = seed * 17;
      pc.record_times = {1.0};
      auto flow = simulate(sc, pc);
      ks.push_back(ks_against_normal(flow.states[0], 1.0));
    }
    std::sort(ks.begin(), ks.end());
    med.push_back(ks[2]);
  }
  CHECK(med[1] < med[0]);
  CHECK(med[2] < med[1]);
}

TEST_CASE("OU variance matches the Euler-Maruyama recursion") {
  auto sc = build_scenario("ou");
  double x0[1] = {0.0};
  sc.initial_law = Measure::dirac(std::span<const double>(x0, 1));
  ParticleSystemConfig pc;
  pc.N = 100000;
  pc.dt = 1e-2;
  pc.seed = 5;
  pc.record_times = {1.0};
  auto flow = simulate(sc, pc);
  // var_{k+1} = (1-dt)^2 var_k + dt, from var_0 = 0
  double v = 0;
  for (int k = 0; k < 100; ++k) v = sqr(1 - pc.dt) * v + pc.dt;
  CHECK(sample_var(flow.states[0]) == doctest::Approx(v).epsilon(0.015));
}

TEST_CASE("example 4 attraction and mollification consistency") {
  auto sc = build_scenario("example4", "{\"kappa\": 1.0, \"sign\": -1}");
  ParticleSystemConfig pc;
  pc.N = 2000;
  pc.dt = 5e-3;
  pc.seed = 11;
  pc.eps_moll = 2.0 * sc.space.cell_width(0);
  pc.record_times = {0.5};
  auto attracted = simulate(sc, pc);

  // noise-only twin: same sigma path, drift disabled, same seed
  ScenarioConfig noise = sc;
  noise.coeffs.drift_kernel = nullptr;
  noise.coeffs.b = nullptr;
  noise.coeffs.drift_singular = false;
  auto free = simulate(noise, pc);
  CHECK(sample_var(attracted.states[0]) < sample_var(free.states[0]));

  // halving the mollification radius moves the second moment by < 2%
  ParticleSystemConfig pc2 = pc;
  pc2.eps_moll = 0.5 * pc.eps_moll;
  auto halved = simulate(sc, pc2);
  double m2a = sample_var(attracted.states[0]);
  double m2b = sample_var(halved.states[0]);
  CHECK(std::abs(m2a - m2b) / m2a < 0.02);

  // missing mollification on a singular interaction is rejected
  ParticleSystemConfig bad = pc;
  bad.eps_moll = 0;
  CHECK_THROWS_AS(simulate(sc, bad), ParamOutOfRange);
}

TEST_CASE("interaction_eval") {
  auto zero = [](double, std::span<const double>, std::span<const double>) {
    return 0.0;
  };
  std::vector<double> parts = {1.0, 3.0};
  double x0[1] = {0.0};
  CHECK(interaction_eval(zero, 0, std::span<const double>(x0, 1), parts, 1,
                         0.0, ParticleSystemConfig::Moll::Cap) == 0.0);
  auto ident = [](double, std::span<const double>, std::span<const double> y) {
    return y[0];
  };
  CHECK(interaction_eval(ident, 0, std::span<const double>(x0, 1), parts, 1,
                         0.0, ParticleSystemConfig::Moll::Cap) ==
        doctest::Approx(2.0));
  // capped singular kernel at a coincident particle stays finite
  double kappa = 1.5;
  auto sing = [kappa](double, std::span<const double> x,
                      std::span<const double> y) {
    double u = x[0] - y[0];
    return (u == 0) ? INFINITY : u * std::pow(std::abs(u), -kappa);
  };
  std::vector<double> coincident = {0.0, 0.5};
  double eps = 0.1;
  double v = interaction_eval(sing, 0, std::span<const double>(x0, 1),
                              coincident, 1, eps,
                              ParticleSystemConfig::Moll::Cap);
  CHECK(std::isfinite(v));
  CHECK(std::abs(v) <= std::pow(eps, 1.0 - kappa));
}

TEST_CASE("empirical_to_measure") {
  EmpiricalFlow flow;
  flow.dim = 1;
  flow.times = {0.5};
  flow.states = {std::vector<double>(500, 0.0)};
  auto g = SpatialGrid::box1d(-1, 1, 8);
  auto mf = empirical_to_measure(flow, g);
  // all particles in one cell
  double w = g.cell_width(0);
  int hits = 0;
  for (double v : mf.at(0).values)
    if (v > 0) {
      ++hits;
      CHECK(v * w == doctest::Approx(1.0));
    }
  CHECK(hits == 1);

  // KDE with h -> 0 degenerates to the histogram
  auto kde = empirical_to_measure(flow, g, Smoothing::Kde, 1e-9);
  CHECK(tv_distance(kde.at(0), mf.at(0)) <= 1e-12);

  // box too small
  EmpiricalFlow far;
  far.dim = 1;
  far.times = {0.5};
  far.states = {std::vector<double>(500, 5.0)};
  CHECK_THROWS_AS(empirical_to_measure(far, g), MassLoss);
}

TEST_CASE("escape radius triggers blowup") {
  ScenarioConfig sc = build_scenario("constant");
  sc.coeffs.b = [](double, std::span<const double>, const Measure&,
                   double* out) { out[0] = 1e5; };
  sc.coeffs.b_summary = nullptr;
  ParticleSystemConfig pc;
  pc.N = 100;
  pc.dt = 1e-2;
  pc.record_times = {1.0};
  CHECK_THROWS_AS(simulate(sc, pc), ParticleBlowup);
}
