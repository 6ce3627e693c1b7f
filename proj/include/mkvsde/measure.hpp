#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mkvsde/common.hpp"
#include "mkvsde/weight.hpp"

namespace mkv {

struct SpatialGrid {
  int dim = 1;
  std::vector<double> lo, hi;  // per axis
  std::vector<int> cells;      // per axis

  static SpatialGrid box1d(double lo, double hi, int cells);
  static SpatialGrid box(std::span<const double> lo, std::span<const double> hi,
                         std::span<const int> cells);

  std::size_t ncells() const;
  double cell_width(int axis) const { return (hi[axis] - lo[axis]) / cells[axis]; }
  double cell_volume() const;
  // center coordinates of flat cell index
  void center(std::size_t flat, double* out) const;
  std::vector<double> centers1d() const;  // d=1 convenience
  bool same_as(const SpatialGrid& o) const;
};

// Exact one-dimensional Gaussian descriptor. Carried by measures constructed
// as analytic Gaussians so that ball masses and distribution integrals can be
// evaluated through erf instead of cell quadrature; dropped by any arithmetic
// that leaves the family.
struct GaussianTag {
  double mean = 0;
  double var = 1;
};

// Signed measure in atom or grid-density representation. Grid values are
// cell-average densities (mass per cell = value * cell volume).
struct Measure {
  enum class Repr { Atoms, Grid };

  Repr repr = Repr::Atoms;
  int dim = 1;
  std::vector<double> points;   // natoms * dim
  std::vector<double> weights;  // natoms (may be signed)
  SpatialGrid grid;
  std::vector<double> values;   // ncells (may be signed)
  std::optional<GaussianTag> gauss;

  static Measure dirac(std::span<const double> x, double w = 1.0);
  static Measure atoms(std::span<const double> pts, std::span<const double> ws,
                       int dim);
  static Measure grid_density(const SpatialGrid& g, std::vector<double> vals);
  static Measure zero_atoms(int dim);
  // exact cell averages of N(mean, var) via erf; carries the analytic tag
  static Measure gaussian1d(double mean, double var, const SpatialGrid& g);

  std::size_t natoms() const { return weights.size(); }
  std::span<const double> atom(std::size_t i) const {
    return {points.data() + i * dim, std::size_t(dim)};
  }

  void check_finite() const;  // throws InvalidMeasure
  double total_mass() const;
  double total_abs_mass() const;
  bool is_probability(double mass_tol = 1e-6) const;

  // <f, m>
  double integrate(const std::function<double(std::span<const double>)>& f) const;
  // mass of the centered ball {|x| <= r}; erf-exact when the Gaussian tag is
  // present, sub-cell linear reconstruction on grids otherwise
  double ball_mass(double r) const;
  double mass_in_interval(double a, double b) const;  // d=1

  Measure scaled(double c) const;
  // this - other (same grid or atoms merged); result is signed
  Measure minus(const Measure& o) const;
  // (1-w)*this + w*other on a shared grid
  Measure blend(const Measure& o, double w) const;
};

double phi_norm(const Measure& m, const WeightFunction& phi);
double tv_distance(const Measure& m, const Measure& m2);
double wasserstein1(const Measure& m, const Measure& m2);
Measure rebin(const Measure& m, const SpatialGrid& target,
              double mass_tol = 1e-3);

}  // namespace mkv
