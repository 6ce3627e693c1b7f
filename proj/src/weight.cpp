#include "mkvsde/weight.hpp"

#include <cmath>

namespace mkv {

WeightFunction WeightFunction::polynomial(double p) {
  if (p < 0) throw ParamOutOfRange("polynomial weight needs p >= 0");
  return {Kind::Polynomial, p};
}

double WeightFunction::eval_radial(double r) const {
  switch (kind) {
    case Kind::ConstantOne: return 1.0;
    case Kind::Polynomial: return 1.0 + std::pow(r, p);
    case Kind::Exponential: return std::exp(std::sqrt(1.0 + r * r));
  }
  return 1.0;
}

double WeightFunction::grad_norm_radial(double r) const {
  switch (kind) {
    case Kind::ConstantOne: return 0.0;
    case Kind::Polynomial:
      return (p == 0) ? 0.0 : p * std::pow(r, p - 1 < 0 ? 0.0 : p - 1);
    case Kind::Exponential: {
      double s = std::sqrt(1.0 + r * r);
      return std::exp(s) * r / s;
    }
  }
  return 0.0;
}

std::vector<double> WeightFunction::grad(std::span<const double> x) const {
  std::vector<double> g(x.size(), 0.0);
  double r = norm2(x);
  if (r == 0) return g;
  double gn = grad_norm_radial(r);
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = gn * x[i] / r;
  return g;
}

std::string WeightFunction::name() const {
  switch (kind) {
    case Kind::ConstantOne: return "one";
    case Kind::Polynomial: return "poly" + std::to_string(int(p));
    case Kind::Exponential: return "exp";
  }
  return "?";
}

WeightConditionReport check_weight_condition(const WeightFunction& phi,
                                             double lambda, int dim,
                                             double x_range, int n_x, int n_t,
                                             int n_h) {
  if (lambda <= 0) throw DomainError("lambda must be positive");
  if (dim != 1 && dim != 2)
    throw Unsupported("weight condition check supports d in {1,2}");
  WeightConditionReport rep;
  rep.worst_x.assign(dim, 0.0);
  // rho_lambda(t,y) = t^{-d/2} exp(-lambda |y|^2 / t): Gaussian of variance
  // t/(2 lambda) per axis, total mass (pi/lambda)^{d/2}. Gauss-Hermite is
  // exact enough for the smooth shipped weights.
  auto gh = gauss_hermite(24);
  const double mass = std::pow(M_PI / lambda, dim / 2.0);
  auto ts = graded_unit(n_t, 2.0);
  auto xs = linspace(-x_range, x_range, n_x);
  auto hs = linspace(-1.0, 1.0, n_h);
  double worst = 0;
  for (double t : ts) {
    double sd = std::sqrt(t / (2.0 * lambda));
    for (double hx : hs) {
      for (double x0 : xs) {
        double conv = 0;
        if (dim == 1) {
          std::vector<double> terms(gh.nodes.size());
          for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
            double y = std::sqrt(2.0) * sd * gh.nodes[i];
            double u = x0 - hx - y;
            double r = std::abs(u);
            terms[i] =
                gh.weights[i] * (phi.eval_radial(r) + phi.grad_norm_radial(r));
          }
          conv = pairwise_sum(terms) / std::sqrt(M_PI) * mass;
        } else {
          std::vector<double> terms;
          terms.reserve(gh.nodes.size() * gh.nodes.size());
          for (std::size_t i = 0; i < gh.nodes.size(); ++i)
            for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
              double y0 = std::sqrt(2.0) * sd * gh.nodes[i];
              double y1 = std::sqrt(2.0) * sd * gh.nodes[j];
              double u0 = x0 - hx - y0, u1 = -y1;
              double r = std::sqrt(u0 * u0 + u1 * u1);
              terms.push_back(gh.weights[i] * gh.weights[j] *
                              (phi.eval_radial(r) + phi.grad_norm_radial(r)));
            }
          conv = pairwise_sum(terms) / M_PI * mass;
        }
        double ratio = conv / phi.eval_radial(std::abs(x0));
        if (ratio > worst) {
          worst = ratio;
          rep.worst_t = t;
          rep.worst_x.assign(dim, 0.0);
          rep.worst_x[0] = x0;
        }
      }
    }
  }
  rep.fitted_C = worst;
  rep.finite = std::isfinite(worst);
  return rep;
}

}  // namespace mkv
