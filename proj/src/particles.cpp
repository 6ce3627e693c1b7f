#include "mkvsde/particles.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "mkvsde/mkv.hpp"
#include "mkvsde/rng.hpp"

namespace mkv {

Measure EmpiricalFlow::atoms_at(std::size_t k) const {
  std::size_t n = states[k].size() / dim;
  return Measure::atoms(states[k], std::vector<double>(n, 1.0 / double(n)),
                        dim);
}

double interaction_eval(
    const std::function<double(double t, std::span<const double> x,
                               std::span<const double> y)>& kernel,
    double t, std::span<const double> x, std::span<const double> particles,
    int dim, double eps_moll, ParticleSystemConfig::Moll scheme) {
  const std::size_t n = particles.size() / dim;
  if (n == 0) return 0.0;
  std::vector<double> terms(n);
  std::vector<double> yv(dim);
  for (std::size_t j = 0; j < n; ++j) {
    for (int a = 0; a < dim; ++a) yv[a] = particles[j * dim + a];
    if (eps_moll > 0) {
      double r = 0;
      for (int a = 0; a < dim; ++a) r += sqr(x[a] - yv[a]);
      r = std::sqrt(r);
      if (r < eps_moll) {
        if (scheme == ParticleSystemConfig::Moll::Cap) {
          if (r == 0) {
            terms[j] = 0;  // coincident pair: capped kernel has no direction
            continue;
          }
          // keep the direction, stretch the offset to length eps_moll
          for (int a = 0; a < dim; ++a)
            yv[a] = x[a] - (x[a] - yv[a]) * (eps_moll / r);
        } else {
          for (int a = 0; a < dim; ++a) yv[a] = x[a] - eps_moll;
        }
      }
    }
    terms[j] = kernel(t, x, yv);
  }
  return pairwise_sum(terms) / double(n);
}

namespace {

// per-step coefficient evaluation: summaries computed once per step
struct StepContext {
  const MkvCoefficients* c;
  const ParticleSystemConfig* pcfg;
  std::vector<double> summary;
  const std::vector<double>* state = nullptr;
  Measure atom_measure;
  bool use_summary = false;
  bool sigma_cached = false;
  double sigma_cache[4];

  void prepare(double t, const std::vector<double>& st, std::size_t n) {
    state = &st;
    use_summary = !c->summaries.empty() && bool(c->sigma_summary);
    Measure m =
        Measure::atoms(st, std::vector<double>(n, 1.0 / double(n)), c->dim);
    sigma_cached = false;
    if (use_summary) {
      summary.clear();
      for (const auto& f : c->summaries) summary.push_back(f(m));
    } else {
      atom_measure = std::move(m);
      if (c->sigma_constant_in_x) {
        // x-independent sigma: one generic evaluation per step
        std::vector<double> origin(c->dim, 0.0);
        c->sigma(t, origin, atom_measure, sigma_cache);
        sigma_cached = true;
      }
    }
  }

  void sigma(double t, std::span<const double> x, double* out) const {
    if (sigma_cached) {
      for (int k = 0; k < c->dim * c->dim; ++k) out[k] = sigma_cache[k];
      return;
    }
    if (use_summary)
      c->sigma_summary(t, x, summary, out);
    else
      c->sigma(t, x, atom_measure, out);
  }

  void drift(double t, std::span<const double> x, double* out) const {
    const int d = c->dim;
    for (int a = 0; a < d; ++a) out[a] = 0;
    if (c->drift_kernel) {
      const std::size_t n = state->size() / d;
      std::vector<double> acc(d, 0.0), yv(d), bv(d);
      for (std::size_t j = 0; j < n; ++j) {
        double r = 0;
        for (int a = 0; a < d; ++a) {
          yv[a] = (*state)[j * d + a];
          r += sqr(x[a] - yv[a]);
        }
        r = std::sqrt(r);
        if (pcfg->eps_moll > 0 && r < pcfg->eps_moll) {
          if (r == 0) continue;  // capped kernel: coincident pair drops out
          if (pcfg->scheme == ParticleSystemConfig::Moll::Cap) {
            for (int a = 0; a < d; ++a)
              yv[a] = x[a] - (x[a] - yv[a]) * (pcfg->eps_moll / r);
          } else {
            for (int a = 0; a < d; ++a) yv[a] = x[a] - pcfg->eps_moll;
          }
        }
        c->drift_kernel(t, x, yv, bv.data());
        for (int a = 0; a < d; ++a) acc[a] += bv[a];
      }
      for (int a = 0; a < d; ++a) out[a] = acc[a] / double(n);
      return;
    }
    if (use_summary && c->b_summary) {
      c->b_summary(t, x, summary, out);
      return;
    }
    if (c->b) c->b(t, x, atom_measure, out);
  }
};

}  // namespace

EmpiricalFlow simulate(const ScenarioConfig& scenario,
                       const ParticleSystemConfig& pcfg) {
  const MkvCoefficients& c = scenario.coeffs;
  const int d = c.dim;
  if (pcfg.N < 100) throw ParamOutOfRange("particle count must be >= 100");
  if (pcfg.dt > 1e-2 + 1e-15) throw ParamOutOfRange("dt must be <= 1e-2");
  if (c.drift_singular && pcfg.eps_moll <= 0)
    throw ParamOutOfRange("singular interaction requires eps_moll > 0");
  double escape = pcfg.escape_radius;
  if (escape <= 0) {
    double half = 0;
    for (int a = 0; a < d; ++a)
      half =
          std::max(half, 0.5 * (scenario.space.hi[a] - scenario.space.lo[a]));
    escape = 10.0 * half;
  }
  std::vector<double> record =
      pcfg.record_times.empty() ? scenario.time_grid : pcfg.record_times;

  CounterRng rng{pcfg.seed ? pcfg.seed : scenario.seed};
  const std::size_t N = pcfg.N;
  std::vector<double> state(N * d);
  const Measure& xi = scenario.initial_law;
  if (xi.repr == Measure::Repr::Atoms) {
    double total = xi.total_mass();
    std::vector<double> cum(xi.natoms());
    double acc = 0;
    for (std::size_t i = 0; i < xi.natoms(); ++i) {
      acc += xi.weights[i] / total;
      cum[i] = acc;
    }
    for (std::size_t i = 0; i < N; ++i) {
      double u = rng.uniform(i, 0, 1000003);
      std::size_t k =
          std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
      k = std::min(k, xi.natoms() - 1);
      for (int a = 0; a < d; ++a) state[i * d + a] = xi.points[k * d + a];
    }
  } else if (xi.gauss) {
    for (std::size_t i = 0; i < N; ++i)
      state[i * d] =
          xi.gauss->mean + std::sqrt(xi.gauss->var) * rng.normal(i, 0, 999983);
  } else {
    if (d != 1) throw Unsupported("grid initial law sampling is 1d");
    std::vector<double> cum(xi.values.size());
    double acc = 0;
    double w = xi.grid.cell_width(0);
    for (std::size_t i = 0; i < xi.values.size(); ++i) {
      acc += std::max(0.0, xi.values[i]) * w;
      cum[i] = acc;
    }
    for (std::size_t i = 0; i < N; ++i) {
      double u = rng.uniform(i, 0, 1000033) * acc;
      std::size_t k =
          std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
      k = std::min(k, cum.size() - 1);
      double frac = rng.uniform(i, 0, 1000037);
      state[i * d] = xi.grid.lo[0] + (double(k) + frac) * w;
    }
  }

  EmpiricalFlow out;
  out.dim = d;
  std::size_t next_record = 0;

  const std::size_t steps = std::size_t(std::llround(1.0 / pcfg.dt));
  StepContext ctx{&c, &pcfg, {}, nullptr, Measure::zero_atoms(d), false};
  std::vector<double> new_state(N * d);
  const double sdt = std::sqrt(pcfg.dt);
  for (std::size_t k = 0; k < steps; ++k) {
    double t = double(k) * pcfg.dt;
    ctx.prepare(t, state, N);
    std::atomic<std::size_t> blew{0};
    parallel_for(N, [&](std::size_t i) {
      std::span<const double> x(state.data() + i * d, std::size_t(d));
      double sig[4], bv[2] = {0, 0}, z[2] = {0, 0};
      ctx.sigma(t, x, sig);
      ctx.drift(t, x, bv);
      for (int a = 0; a < d; ++a) z[a] = rng.normal(i, k, a);
      for (int a = 0; a < d; ++a) {
        double diff = 0;
        for (int e = 0; e < d; ++e) diff += sig[a * d + e] * z[e];
        double v = state[i * d + a] + bv[a] * pcfg.dt + diff * sdt;
        new_state[i * d + a] = v;
        if (std::abs(v) > escape) blew.fetch_add(1);
      }
    });
    if (blew.load()) throw ParticleBlowup("particle escaped the safety radius");
    state.swap(new_state);
    double t_next = t + pcfg.dt;
    while (next_record < record.size() &&
           record[next_record] <= t_next + 1e-12) {
      out.times.push_back(record[next_record]);
      out.states.push_back(state);
      ++next_record;
    }
  }
  while (next_record < record.size()) {
    out.times.push_back(record[next_record]);
    out.states.push_back(state);
    ++next_record;
  }
  return out;
}

MeasureFlow empirical_to_measure(const EmpiricalFlow& flow,
                                 const SpatialGrid& grid, Smoothing smoothing,
                                 double bandwidth) {
  std::vector<Measure> ms;
  for (std::size_t k = 0; k < flow.times.size(); ++k) {
    Measure atoms = flow.atoms_at(k);
    double inside = 0;
    for (std::size_t i = 0; i < atoms.natoms(); ++i) {
      bool in = true;
      for (int a = 0; a < atoms.dim; ++a) {
        double v = atoms.points[i * atoms.dim + a];
        if (v < grid.lo[a] || v > grid.hi[a]) in = false;
      }
      if (in) inside += atoms.weights[i];
    }
    if (inside < 0.9)
      throw MassLoss("fewer than 90% of particles inside the grid box");
    Measure m = rebin(atoms, grid, 0.11);
    if (smoothing == Smoothing::Kde && bandwidth > 0 && grid.dim == 1) {
      const int n = grid.cells[0];
      const double w = grid.cell_width(0);
      int reach = std::max(1, int(std::ceil(4 * bandwidth / w)));
      std::vector<double> kern(2 * reach + 1);
      double ksum = 0;
      for (int j = -reach; j <= reach; ++j) {
        kern[j + reach] = std::exp(-0.5 * sqr(j * w / bandwidth));
        ksum += kern[j + reach];
      }
      for (double& v : kern) v /= ksum;
      std::vector<double> blurred(n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = -reach; j <= reach; ++j) {
          int src = std::clamp(i + j, 0, n - 1);
          blurred[i] += m.values[src] * kern[j + reach];
        }
      m.values = std::move(blurred);
    }
    double mass = m.total_mass();
    if (mass > 0)
      for (double& v : m.values) v /= mass;
    ms.push_back(std::move(m));
  }
  return MeasureFlow::make(flow.times, std::move(ms), true, 1e-6);
}

}  // namespace mkv
