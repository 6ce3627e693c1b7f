#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mkv {

// Error taxonomy. Every failure mode named by the public operations maps to
// one code so the C API and the CLI can emit machine-readable diagnoses.
enum class errc {
  ok = 0,
  invalid_measure,
  grid_mismatch,
  not_probability,
  mass_loss,
  domain_error,
  divergent,
  index_set_error,
  ellipticity_error,
  non_integrable_singularity,
  series_diverging,
  no_envelope,
  assumption_violation,
  missing_derivative,
  particle_blowup,
  cfl_violation,
  non_finite_state,
  unknown_scenario,
  param_out_of_range,
  unsupported,
  io_error,
};

const char* errc_name(errc c);

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

#define MKV_DEFINE_ERROR(NAME, CODE)                         \
  class NAME : public error {                                \
   public:                                                   \
    explicit NAME(const std::string& what)                   \
        : error(errc::CODE, what) {}                         \
  };

MKV_DEFINE_ERROR(InvalidMeasure, invalid_measure)
MKV_DEFINE_ERROR(GridMismatch, grid_mismatch)
MKV_DEFINE_ERROR(NotProbability, not_probability)
MKV_DEFINE_ERROR(MassLoss, mass_loss)
MKV_DEFINE_ERROR(DomainError, domain_error)
MKV_DEFINE_ERROR(Divergent, divergent)
MKV_DEFINE_ERROR(IndexSetError, index_set_error)
MKV_DEFINE_ERROR(EllipticityError, ellipticity_error)
MKV_DEFINE_ERROR(NonIntegrableSingularity, non_integrable_singularity)
MKV_DEFINE_ERROR(SeriesDiverging, series_diverging)
MKV_DEFINE_ERROR(NoEnvelope, no_envelope)
MKV_DEFINE_ERROR(AssumptionViolation, assumption_violation)
MKV_DEFINE_ERROR(MissingDerivative, missing_derivative)
MKV_DEFINE_ERROR(ParticleBlowup, particle_blowup)
MKV_DEFINE_ERROR(CFLViolation, cfl_violation)
MKV_DEFINE_ERROR(NonFiniteState, non_finite_state)
MKV_DEFINE_ERROR(UnknownScenario, unknown_scenario)
MKV_DEFINE_ERROR(ParamOutOfRange, param_out_of_range)
MKV_DEFINE_ERROR(Unsupported, unsupported)
MKV_DEFINE_ERROR(IoError, io_error)

#undef MKV_DEFINE_ERROR

// Deterministic pairwise summation. All cell sums in the library go through
// this so results do not depend on thread count or partition.
double pairwise_sum(std::span<const double> v);

inline double sqr(double x) { return x * x; }

inline double norm2(std::span<const double> x) {
  double s = 0;
  for (double xi : x) s += xi * xi;
  return std::sqrt(s);
}

std::vector<double> linspace(double a, double b, int n);

// n nodes on (0,1] clustered near 0: u_k = (k/n)^power, k = 1..n.
std::vector<double> graded_unit(int n, double power);

// Gauss-Legendre nodes/weights on [-1,1], computed by Newton iteration.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_legendre(int n);
// Gauss-Hermite for weight exp(-u^2) on (-inf, inf).
Quadrature gauss_hermite(int n);

// Runs fn(i) for i in [0, n). Each index is processed by exactly one worker,
// so writes to disjoint outputs are race free and results are independent of
// the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Global worker cap (CLI --threads). 0 = hardware concurrency.
void set_max_threads(int n);
int max_threads();

}  // namespace mkv
