#pragma once

#include <vector>

#include "mkvsde/measure.hpp"
#include "mkvsde/weight.hpp"

namespace mkv {

// Time-indexed curve of measures on (0,1]. An S_phi flow holds probability
// grid densities (the absolute-continuity surrogate); atoms are rejected for
// S_phi-flagged flows.
struct MeasureFlow {
  std::vector<double> times;  // strictly increasing, in (0,1]
  std::vector<Measure> measures;
  bool sphi = false;

  static MeasureFlow make(std::vector<double> times, std::vector<Measure> ms,
                          bool sphi_flag, double mass_tol = 1e-2);

  std::size_t size() const { return times.size(); }
  const Measure& at(std::size_t k) const { return measures[k]; }
  // index of the last node with t_k <= t (piecewise-constant-left), clamped
  std::size_t left_index(double t) const;
  bool aligned_with(const MeasureFlow& o) const { return times == o.times; }
};

// d_phi(mu, mu') = max_k 2^{-k} s_k / (1 + s_k),
// s_k = sup over grid times in [1/k, 1] of the phi-gap; k up to ceil(1/t_1).
double dphi_metric(const MeasureFlow& mu, const MeasureFlow& mu2,
                   const WeightFunction& phi);

// sup over all grid times of ||mu_t - mu'_t||_phi
double sup_phi_gap(const MeasureFlow& mu, const MeasureFlow& mu2,
                   const WeightFunction& phi);

// default flow grid: t_k = (k/K)^2, k = 1..K
std::vector<double> default_time_grid(int K);

}  // namespace mkv
