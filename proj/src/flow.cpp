#include "mkvsde/flow.hpp"

#include <algorithm>
#include <cmath>

namespace mkv {

MeasureFlow MeasureFlow::make(std::vector<double> times,
                              std::vector<Measure> ms, bool sphi_flag,
                              double mass_tol) {
  if (times.size() != ms.size() || times.empty())
    throw GridMismatch("flow times/measures size mismatch");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] <= 0 || times[k] > 1.0 + 1e-12)
      throw ParamOutOfRange("flow times must lie in (0,1]");
    if (k > 0 && times[k] <= times[k - 1])
      throw ParamOutOfRange("flow times must be strictly increasing");
  }
  const int d = ms.front().dim;
  const auto repr = ms.front().repr;
  for (const auto& m : ms) {
    if (m.dim != d || m.repr != repr)
      throw GridMismatch("flow measures must share dim and representation");
    if (sphi_flag) {
      if (m.repr != Measure::Repr::Grid)
        throw AssumptionViolation("S_phi flows require grid densities");
      if (!m.is_probability(mass_tol))
        throw AssumptionViolation("S_phi flows require probability measures");
    }
  }
  MeasureFlow f;
  f.times = std::move(times);
  f.measures = std::move(ms);
  f.sphi = sphi_flag;
  return f;
}

std::size_t MeasureFlow::left_index(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0;
  return std::size_t(it - times.begin()) - 1;
}

double sup_phi_gap(const MeasureFlow& mu, const MeasureFlow& mu2,
                   const WeightFunction& phi) {
  if (!mu.aligned_with(mu2)) throw GridMismatch("flow time grids differ");
  double s = 0;
  for (std::size_t k = 0; k < mu.size(); ++k)
    s = std::max(s, phi_norm(mu.at(k).minus(mu2.at(k)), phi));
  return s;
}

double dphi_metric(const MeasureFlow& mu, const MeasureFlow& mu2,
                   const WeightFunction& phi) {
  if (!mu.aligned_with(mu2)) throw GridMismatch("flow time grids differ");
  const std::size_t n = mu.size();
  std::vector<double> gap(n);
  for (std::size_t k = 0; k < n; ++k)
    gap[k] = phi_norm(mu.at(k).minus(mu2.at(k)), phi);
  const int kmax = int(std::ceil(1.0 / mu.times.front()));
  double best = 0;
  for (int k = 1; k <= kmax; ++k) {
    double sk = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (mu.times[j] >= 1.0 / k - 1e-15) sk = std::max(sk, gap[j]);
    best = std::max(best, std::pow(2.0, -k) * sk / (1.0 + sk));
  }
  return best;
}

std::vector<double> default_time_grid(int K) {
  std::vector<double> t(K);
  for (int k = 1; k <= K; ++k) t[k - 1] = sqr(double(k) / K);
  return t;
}

}  // namespace mkv
