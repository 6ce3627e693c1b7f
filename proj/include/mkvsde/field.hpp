#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mkvsde/common.hpp"

namespace mkv {

// Scalar space-time field f(t, x). Fields vanish outside their declared time
// interval (extension by zero); the default interval is [0,1]. A compact
// spatial support hint, when present, bounds quadrature domains.
struct SpaceTimeField {
  int dim = 1;
  std::function<double(double t, std::span<const double> x)> eval;
  double time_lo = 0.0;
  double time_hi = 1.0;
  bool time_independent = false;
  std::optional<double> support_radius;  // |x| <= radius outside of which f = 0
  std::vector<std::vector<double>> singular_points;  // spatial singularities

  static constexpr double kInf = std::numeric_limits<double>::infinity();

  double operator()(double t, std::span<const double> x) const {
    if (t < time_lo || t > time_hi) return 0.0;
    return eval(t, x);
  }

  static SpaceTimeField constant(int dim, double c,
                                 double tlo = -kInf, double thi = kInf);
  static SpaceTimeField indicator_ball(int dim, double radius,
                                       double tlo = 0.0, double thi = 1.0);
  // |x|^{-gamma} on B_radius, declared singular at the origin
  static SpaceTimeField power_singularity(int dim, double gamma, double radius,
                                          double tlo = 0.0, double thi = 1.0);
};

}  // namespace mkv
