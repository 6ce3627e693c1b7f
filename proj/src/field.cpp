#include "mkvsde/field.hpp"

#include <cmath>

namespace mkv {

SpaceTimeField SpaceTimeField::constant(int dim, double c, double tlo,
                                        double thi) {
  SpaceTimeField f;
  f.dim = dim;
  f.eval = [c](double, std::span<const double>) { return c; };
  f.time_lo = tlo;
  f.time_hi = thi;
  f.time_independent = true;
  return f;
}

SpaceTimeField SpaceTimeField::indicator_ball(int dim, double radius,
                                              double tlo, double thi) {
  SpaceTimeField f;
  f.dim = dim;
  f.eval = [radius](double, std::span<const double> x) {
    return norm2(x) <= radius ? 1.0 : 0.0;
  };
  f.time_lo = tlo;
  f.time_hi = thi;
  f.time_independent = true;
  f.support_radius = radius;
  return f;
}

SpaceTimeField SpaceTimeField::power_singularity(int dim, double gamma,
                                                 double radius, double tlo,
                                                 double thi) {
  SpaceTimeField f;
  f.dim = dim;
  f.eval = [gamma, radius](double, std::span<const double> x) {
    double r = norm2(x);
    if (r > radius) return 0.0;
    if (r == 0) return std::numeric_limits<double>::infinity();
    return std::pow(r, -gamma);
  };
  f.time_lo = tlo;
  f.time_hi = thi;
  f.time_independent = true;
  f.support_radius = radius;
  f.singular_points = {std::vector<double>(dim, 0.0)};
  return f;
}

}  // namespace mkv
