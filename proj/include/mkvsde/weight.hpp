#pragma once

#include <span>
#include <string>
#include <vector>

#include "mkvsde/common.hpp"

namespace mkv {

// Radial weight phi >= 1, nondecreasing in |x|. The shipped kinds are the
// admissible examples: phi == 1, 1 + |x|^p and exp(sqrt(1+|x|^2)).
struct WeightFunction {
  enum class Kind { ConstantOne, Polynomial, Exponential };

  Kind kind = Kind::ConstantOne;
  double p = 2.0;  // polynomial exponent

  static WeightFunction constant_one() { return {Kind::ConstantOne, 0.0}; }
  static WeightFunction polynomial(double p);
  static WeightFunction exponential() { return {Kind::Exponential, 0.0}; }

  double eval(std::span<const double> x) const { return eval_radial(norm2(x)); }
  double eval_radial(double r) const;
  // |grad phi| as a function of |x| (phi is radial).
  double grad_norm_radial(double r) const;
  std::vector<double> grad(std::span<const double> x) const;

  std::string name() const;
};

struct WeightConditionReport {
  double fitted_C = 0;
  double worst_t = 0;
  std::vector<double> worst_x;
  bool finite = false;
};

// Discrete check of the convolution condition
//   int (|phi| + |grad phi|)(x - h - y) rho_lambda(t, y) dy <= C phi(x)
// over sampled t in (0,1], |h| <= 1 and x in [-x_range, x_range]^d.
WeightConditionReport check_weight_condition(const WeightFunction& phi,
                                             double lambda, int dim,
                                             double x_range = 8.0,
                                             int n_x = 17, int n_t = 8,
                                             int n_h = 5);

}  // namespace mkv
