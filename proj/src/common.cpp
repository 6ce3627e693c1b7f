#include "mkvsde/common.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>

namespace mkv {

const char* errc_name(errc c) {
  switch (c) {
    case errc::ok: return "ok";
    case errc::invalid_measure: return "InvalidMeasure";
    case errc::grid_mismatch: return "GridMismatch";
    case errc::not_probability: return "NotProbability";
    case errc::mass_loss: return "MassLoss";
    case errc::domain_error: return "DomainError";
    case errc::divergent: return "Divergent";
    case errc::index_set_error: return "IndexSetError";
    case errc::ellipticity_error: return "EllipticityError";
    case errc::non_integrable_singularity: return "NonIntegrableSingularity";
    case errc::series_diverging: return "SeriesDiverging";
    case errc::no_envelope: return "NoEnvelope";
    case errc::assumption_violation: return "AssumptionViolation";
    case errc::missing_derivative: return "MissingDerivative";
    case errc::particle_blowup: return "ParticleBlowup";
    case errc::cfl_violation: return "CFLViolation";
    case errc::non_finite_state: return "NonFiniteState";
    case errc::unknown_scenario: return "UnknownScenario";
    case errc::param_out_of_range: return "ParamOutOfRange";
    case errc::unsupported: return "Unsupported";
    case errc::io_error: return "IoError";
  }
  return "unknown";
}

double pairwise_sum(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = 0.5 * (a + b);
    return v;
  }
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

std::vector<double> graded_unit(int n, double power) {
  std::vector<double> v(n);
  for (int k = 1; k <= n; ++k) v[k - 1] = std::pow(double(k) / n, power);
  return v;
}

Quadrature gauss_legendre(int n) {
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Chebyshev initial guess, Newton on P_n.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.nodes[i] = -x;
    q.nodes[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.weights[i] = w;
    q.weights[n - 1 - i] = w;
  }
  return q;
}

Quadrature gauss_hermite(int n) {
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  const double c = std::pow(M_PI, -0.25);
  std::vector<double> roots;  // found roots, descending
  double z = 0;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) -
          1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    else if (i == 1)
      z -= 1.14 * std::pow(double(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * roots[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * roots[1];
    else
      z = 2.0 * z - roots[i - 2];
    // Newton on the orthonormal Hermite recurrence
    double dh = 0, h1 = 0;
    for (int it = 0; it < 200; ++it) {
      double h0 = c;
      h1 = std::sqrt(2.0) * z * c;
      for (int k = 2; k <= n; ++k) {
        double h2 = z * std::sqrt(2.0 / k) * h1 - std::sqrt((k - 1.0) / k) * h0;
        h0 = h1;
        h1 = h2;
      }
      dh = std::sqrt(2.0 * n) * h0;
      double dz = h1 / dh;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    roots.push_back(z);
    q.nodes[n - 1 - i] = z;
    q.nodes[i] = -z;
    double w = 2.0 / (dh * dh);
    q.weights[n - 1 - i] = w;
    q.weights[i] = w;
  }
  if (n % 2 == 1) {
    q.nodes[n / 2] = 0.0;
    double rest = 0;
    for (int i = 0; i < n; ++i)
      if (i != n / 2) rest += q.weights[i];
    q.weights[n / 2] = std::sqrt(M_PI) - rest;
  }
  return q;
}

namespace {
std::atomic<int> g_max_threads{0};
}

void set_max_threads(int n) { g_max_threads.store(n); }
int max_threads() {
  int n = g_max_threads.load();
  if (n > 0) return n;
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? int(hc) : 1;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int nt = std::min<std::size_t>(max_threads(), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace mkv
