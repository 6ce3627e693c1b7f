#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mkvsde/flow.hpp"
#include "mkvsde/measure.hpp"

namespace mkv {

struct MkvCoefficients;  // mkv.hpp
struct ScenarioConfig;

struct ParticleSystemConfig {
  std::size_t N = 10000;
  double dt = 1e-2;
  std::uint64_t seed = 0;
  double eps_moll = 0.0;  // required > 0 for singular interactions
  enum class Moll { Cap, Shift } scheme = Moll::Cap;
  std::vector<double> record_times;  // subset of the flow grid
  double escape_radius = 0.0;        // 0: defaults to 10x box half-width
};

struct EmpiricalFlow {
  int dim = 1;
  std::vector<double> times;
  std::vector<std::vector<double>> states;  // per time: N*dim coordinates

  Measure atoms_at(std::size_t k) const;
};

// Euler-Maruyama with the empirical measure frozen at each step start.
// Deterministic for a fixed (scenario, config, seed) under any thread count.
EmpiricalFlow simulate(const ScenarioConfig& scenario,
                       const ParticleSystemConfig& pcfg);

enum class Smoothing { Histogram, Kde };
MeasureFlow empirical_to_measure(const EmpiricalFlow& flow,
                                 const SpatialGrid& grid,
                                 Smoothing smoothing = Smoothing::Histogram,
                                 double bandwidth = 0.0);

// (1/N) sum_j B(t, x, X_j) with cap/shift mollification of |x - X_j|
double interaction_eval(
    const std::function<double(double t, std::span<const double> x,
                               std::span<const double> y)>& kernel,
    double t, std::span<const double> x, std::span<const double> particles,
    int dim, double eps_moll, ParticleSystemConfig::Moll scheme);

}  // namespace mkv
