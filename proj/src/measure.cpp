#include "mkvsde/measure.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace mkv {

SpatialGrid SpatialGrid::box1d(double lo_, double hi_, int cells_) {
  SpatialGrid g;
  g.dim = 1;
  g.lo = {lo_};
  g.hi = {hi_};
  g.cells = {cells_};
  if (cells_ < 1 || hi_ <= lo_) throw ParamOutOfRange("bad 1d grid");
  return g;
}

SpatialGrid SpatialGrid::box(std::span<const double> lo_,
                             std::span<const double> hi_,
                             std::span<const int> cells_) {
  SpatialGrid g;
  g.dim = int(lo_.size());
  g.lo.assign(lo_.begin(), lo_.end());
  g.hi.assign(hi_.begin(), hi_.end());
  g.cells.assign(cells_.begin(), cells_.end());
  for (int a = 0; a < g.dim; ++a)
    if (g.cells[a] < 1 || g.hi[a] <= g.lo[a]) throw ParamOutOfRange("bad grid");
  return g;
}

std::size_t SpatialGrid::ncells() const {
  std::size_t n = 1;
  for (int c : cells) n *= std::size_t(c);
  return n;
}

double SpatialGrid::cell_volume() const {
  double v = 1;
  for (int a = 0; a < dim; ++a) v *= cell_width(a);
  return v;
}

void SpatialGrid::center(std::size_t flat, double* out) const {
  for (int a = dim - 1; a >= 0; --a) {
    std::size_t idx = flat % cells[a];
    flat /= cells[a];
    out[a] = lo[a] + (double(idx) + 0.5) * cell_width(a);
  }
}

std::vector<double> SpatialGrid::centers1d() const {
  std::vector<double> c(cells[0]);
  for (int i = 0; i < cells[0]; ++i) c[i] = lo[0] + (i + 0.5) * cell_width(0);
  return c;
}

bool SpatialGrid::same_as(const SpatialGrid& o) const {
  return dim == o.dim && lo == o.lo && hi == o.hi && cells == o.cells;
}

Measure Measure::dirac(std::span<const double> x, double w) {
  Measure m;
  m.repr = Repr::Atoms;
  m.dim = int(x.size());
  m.points.assign(x.begin(), x.end());
  m.weights = {w};
  return m;
}

Measure Measure::atoms(std::span<const double> pts, std::span<const double> ws,
                       int dim) {
  if (pts.size() != ws.size() * std::size_t(dim))
    throw InvalidMeasure("atom points/weights size mismatch");
  Measure m;
  m.repr = Repr::Atoms;
  m.dim = dim;
  m.points.assign(pts.begin(), pts.end());
  m.weights.assign(ws.begin(), ws.end());
  return m;
}

Measure Measure::grid_density(const SpatialGrid& g, std::vector<double> vals) {
  if (vals.size() != g.ncells())
    throw InvalidMeasure("grid values size mismatch");
  Measure m;
  m.repr = Repr::Grid;
  m.dim = g.dim;
  m.grid = g;
  m.values = std::move(vals);
  return m;
}

Measure Measure::zero_atoms(int dim) {
  Measure m;
  m.repr = Repr::Atoms;
  m.dim = dim;
  return m;
}

Measure Measure::gaussian1d(double mean, double var, const SpatialGrid& g) {
  if (g.dim != 1) throw Unsupported("gaussian1d needs a 1d grid");
  if (var <= 0) throw DomainError("gaussian variance must be positive");
  const double sd = std::sqrt(var);
  const double w = g.cell_width(0);
  std::vector<double> vals(g.cells[0]);
  auto cdf = [&](double x) {
    return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
  };
  for (int i = 0; i < g.cells[0]; ++i) {
    double a = g.lo[0] + i * w, b = a + w;
    vals[i] = (cdf(b) - cdf(a)) / w;
  }
  Measure m = grid_density(g, std::move(vals));
  m.gauss = GaussianTag{mean, var};
  return m;
}

void Measure::check_finite() const {
  const auto& data = (repr == Repr::Atoms) ? weights : values;
  for (double v : data)
    if (!std::isfinite(v)) throw InvalidMeasure("non-finite measure data");
  if (repr == Repr::Atoms)
    for (double v : points)
      if (!std::isfinite(v)) throw InvalidMeasure("non-finite atom position");
}

double Measure::total_mass() const {
  if (repr == Repr::Atoms) return pairwise_sum(weights);
  return pairwise_sum(values) * grid.cell_volume();
}

double Measure::total_abs_mass() const {
  std::vector<double> a;
  const auto& data = (repr == Repr::Atoms) ? weights : values;
  a.reserve(data.size());
  for (double v : data) a.push_back(std::abs(v));
  double s = pairwise_sum(a);
  return (repr == Repr::Atoms) ? s : s * grid.cell_volume();
}

bool Measure::is_probability(double mass_tol) const {
  const auto& data = (repr == Repr::Atoms) ? weights : values;
  for (double v : data)
    if (v < -1e-12) return false;
  return std::abs(total_mass() - 1.0) <= mass_tol;
}

double Measure::integrate(
    const std::function<double(std::span<const double>)>& f) const {
  std::vector<double> terms;
  if (repr == Repr::Atoms) {
    terms.reserve(natoms());
    for (std::size_t i = 0; i < natoms(); ++i)
      terms.push_back(weights[i] * f(atom(i)));
    return pairwise_sum(terms);
  }
  const std::size_t n = grid.ncells();
  terms.resize(n);
  std::vector<double> c(dim);
  const double vol = grid.cell_volume();
  for (std::size_t i = 0; i < n; ++i) {
    grid.center(i, c.data());
    terms[i] = values[i] * f(c) * vol;
  }
  return pairwise_sum(terms);
}

double Measure::mass_in_interval(double a, double b) const {
  if (dim != 1) throw Unsupported("mass_in_interval is 1d");
  if (b <= a) return 0;
  if (gauss) {
    const double sd = std::sqrt(gauss->var);
    auto cdf = [&](double x) {
      return 0.5 * std::erfc(-(x - gauss->mean) / (sd * std::sqrt(2.0)));
    };
    return cdf(b) - cdf(a);
  }
  if (repr == Repr::Atoms) {
    double s = 0;
    for (std::size_t i = 0; i < natoms(); ++i) {
      double x = points[i];
      if (x >= a && x <= b) s += weights[i];
    }
    return s;
  }
  // Sub-cell linear reconstruction: value profile v_i + s_i (x - c_i) with
  // the centered slope from neighbours. Quadratic accuracy at cut cells.
  const double w = grid.cell_width(0);
  const int n = grid.cells[0];
  auto slope = [&](int i) {
    if (n == 1) return 0.0;
    if (i == 0) return (values[1] - values[0]) / w;
    if (i == n - 1) return (values[n - 1] - values[n - 2]) / w;
    return (values[i + 1] - values[i - 1]) / (2 * w);
  };
  double s = 0;
  for (int i = 0; i < n; ++i) {
    double el = grid.lo[0] + i * w, er = el + w;
    double lo_ = std::max(a, el), hi_ = std::min(b, er);
    if (hi_ <= lo_) continue;
    if (lo_ == el && hi_ == er) {
      s += values[i] * w;
    } else {
      double c = el + 0.5 * w, sl = slope(i);
      s += values[i] * (hi_ - lo_) +
           0.5 * sl * (sqr(hi_ - c) - sqr(lo_ - c));
    }
  }
  return s;
}

double Measure::ball_mass(double r) const {
  if (r < 0) return 0;
  if (dim == 1) return mass_in_interval(-r, r);
  if (repr == Repr::Atoms) {
    double s = 0;
    for (std::size_t i = 0; i < natoms(); ++i)
      if (norm2(atom(i)) <= r) s += weights[i];
    return s;
  }
  // whole-cell inclusion by center; adequate for the d=2 uses
  double s = 0;
  std::vector<double> c(dim);
  for (std::size_t i = 0; i < grid.ncells(); ++i) {
    grid.center(i, c.data());
    if (norm2(c) <= r) s += values[i];
  }
  return s * grid.cell_volume();
}

Measure Measure::scaled(double c) const {
  Measure m = *this;
  auto& data = (m.repr == Repr::Atoms) ? m.weights : m.values;
  for (double& v : data) v *= c;
  m.gauss.reset();
  return m;
}

Measure Measure::minus(const Measure& o) const {
  if (dim != o.dim) throw GridMismatch("dimension mismatch");
  if (repr == Repr::Grid && o.repr == Repr::Grid) {
    if (!grid.same_as(o.grid))
      throw GridMismatch("grids differ; rebin first");
    Measure m = *this;
    for (std::size_t i = 0; i < values.size(); ++i) m.values[i] -= o.values[i];
    m.gauss.reset();
    return m;
  }
  if (repr == Repr::Atoms && o.repr == Repr::Atoms) {
    Measure m = *this;
    m.points.insert(m.points.end(), o.points.begin(), o.points.end());
    for (double w : o.weights) m.weights.push_back(-w);
    return m;
  }
  throw GridMismatch("mixed representations; rebin first");
}

Measure Measure::blend(const Measure& o, double w) const {
  if (repr != Repr::Grid || o.repr != Repr::Grid || !grid.same_as(o.grid))
    throw GridMismatch("blend needs a shared grid");
  Measure m = *this;
  for (std::size_t i = 0; i < values.size(); ++i)
    m.values[i] = (1.0 - w) * values[i] + w * o.values[i];
  m.gauss.reset();
  return m;
}

double phi_norm(const Measure& m, const WeightFunction& phi) {
  m.check_finite();
  std::vector<double> terms;
  if (m.repr == Measure::Repr::Atoms) {
    terms.reserve(m.natoms());
    for (std::size_t i = 0; i < m.natoms(); ++i)
      terms.push_back(std::abs(m.weights[i]) * phi.eval(m.atom(i)));
    return pairwise_sum(terms);
  }
  const std::size_t n = m.grid.ncells();
  terms.resize(n);
  std::vector<double> c(m.dim);
  const double vol = m.grid.cell_volume();
  for (std::size_t i = 0; i < n; ++i) {
    m.grid.center(i, c.data());
    terms[i] = std::abs(m.values[i]) * phi.eval(c) * vol;
  }
  return pairwise_sum(terms);
}

namespace {

// merge atoms with exactly equal coordinates
std::map<std::vector<double>, double> atom_map(const Measure& m) {
  std::map<std::vector<double>, double> mp;
  for (std::size_t i = 0; i < m.natoms(); ++i) {
    auto a = m.atom(i);
    mp[std::vector<double>(a.begin(), a.end())] += m.weights[i];
  }
  return mp;
}

}  // namespace

double tv_distance(const Measure& m, const Measure& m2) {
  m.check_finite();
  m2.check_finite();
  if (m.dim != m2.dim) throw GridMismatch("dimension mismatch");
  if (m.repr == Measure::Repr::Grid && m2.repr == Measure::Repr::Grid) {
    if (!m.grid.same_as(m2.grid))
      throw GridMismatch("grids differ; rebin first");
    std::vector<double> terms(m.values.size());
    for (std::size_t i = 0; i < terms.size(); ++i)
      terms[i] = std::abs(m.values[i] - m2.values[i]);
    return pairwise_sum(terms) * m.grid.cell_volume();
  }
  if (m.repr == Measure::Repr::Atoms && m2.repr == Measure::Repr::Atoms) {
    auto a = atom_map(m), b = atom_map(m2);
    for (const auto& [k, v] : b) a[k] -= v;
    double s = 0;
    for (const auto& [k, v] : a) s += std::abs(v);
    return s;
  }
  throw GridMismatch("mixed representations; rebin first");
}

namespace {

// exact integral of |linear interpolant| between edge values a, b over width w
double abs_linear_integral(double a, double b, double w) {
  if (a * b >= 0) return 0.5 * w * (std::abs(a) + std::abs(b));
  return 0.5 * w * (a * a + b * b) / (std::abs(a) + std::abs(b));
}

double w1_grids_1d(const Measure& m, const Measure& m2) {
  const auto& g = m.grid;
  const double w = g.cell_width(0);
  const int n = g.cells[0];
  // CDF difference at cell edges (exact from cell masses)
  double F = 0, G = 0, total = 0;
  double prev = 0;
  for (int i = 0; i < n; ++i) {
    F += m.values[i] * w;
    G += m2.values[i] * w;
    double cur = F - G;
    total += abs_linear_integral(prev, cur, w);
    prev = cur;
  }
  return total;
}

double w1_atoms_1d(const Measure& m, const Measure& m2) {
  struct Pt {
    double x, w;
    int which;
  };
  std::vector<Pt> pts;
  for (std::size_t i = 0; i < m.natoms(); ++i)
    pts.push_back({m.points[i], m.weights[i], 0});
  for (std::size_t i = 0; i < m2.natoms(); ++i)
    pts.push_back({m2.points[i], m2.weights[i], 1});
  std::sort(pts.begin(), pts.end(),
            [](const Pt& a, const Pt& b) { return a.x < b.x; });
  double diff = 0, total = 0;
  for (std::size_t i = 0; i + 1 <= pts.size(); ++i) {
    diff += (pts[i].which == 0) ? pts[i].w : -pts[i].w;
    if (i + 1 < pts.size()) total += std::abs(diff) * (pts[i + 1].x - pts[i].x);
  }
  return total;
}

// exact assignment (Jonker-Volgenant shortest augmenting path), uniform atoms
double w1_assignment(const Measure& m, const Measure& m2) {
  const int n = int(m.natoms());
  if (int(m2.natoms()) != n)
    throw Unsupported("d>=2 W1 needs equal atom counts");
  for (std::size_t i = 0; i < m.natoms(); ++i)
    if (std::abs(m.weights[i] - 1.0 / n) > 1e-12 ||
        std::abs(m2.weights[i] - 1.0 / n) > 1e-12)
      throw Unsupported("d>=2 W1 needs uniform weights 1/n");
  if (n > 1024) throw Unsupported("d>=2 W1 capped at 1024 atoms");
  auto cost = [&](int i, int j) {
    double s = 0;
    for (int a = 0; a < m.dim; ++a)
      s += sqr(m.points[i * m.dim + a] - m2.points[j * m.dim + a]);
    return std::sqrt(s);
  };
  const double INF = 1e100;
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, INF);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = -1;
      double delta = INF;
      for (int j = 1; j <= n; ++j)
        if (!used[j]) {
          double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0;
  for (int j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
  return total / n;
}

}  // namespace

double wasserstein1(const Measure& m, const Measure& m2) {
  m.check_finite();
  m2.check_finite();
  if (m.dim != m2.dim) throw GridMismatch("dimension mismatch");
  if (!m.is_probability(1e-6) || !m2.is_probability(1e-6))
    throw NotProbability("W1 needs probability measures");
  if (m.dim == 1) {
    if (m.repr == Measure::Repr::Grid && m2.repr == Measure::Repr::Grid) {
      if (!m.grid.same_as(m2.grid))
        throw GridMismatch("grids differ; rebin first");
      return w1_grids_1d(m, m2);
    }
    if (m.repr == Measure::Repr::Atoms && m2.repr == Measure::Repr::Atoms)
      return w1_atoms_1d(m, m2);
    throw GridMismatch("mixed representations; rebin first");
  }
  if (m.repr == Measure::Repr::Atoms && m2.repr == Measure::Repr::Atoms)
    return w1_assignment(m, m2);
  throw Unsupported("d>=2 W1 is atoms-only");
}

Measure rebin(const Measure& m, const SpatialGrid& target, double mass_tol) {
  m.check_finite();
  if (m.dim != target.dim) throw GridMismatch("dimension mismatch");
  std::vector<double> vals(target.ncells(), 0.0);
  const double vol = target.cell_volume();
  double captured = 0;
  if (m.repr == Measure::Repr::Atoms) {
    for (std::size_t i = 0; i < m.natoms(); ++i) {
      auto x = m.atom(i);
      std::size_t flat = 0;
      bool inside = true;
      for (int a = 0; a < m.dim; ++a) {
        double u = (x[a] - target.lo[a]) / target.cell_width(a);
        int idx = int(std::floor(u));
        if (idx == target.cells[a] && x[a] <= target.hi[a]) idx--;  // top edge
        if (idx < 0 || idx >= target.cells[a]) {
          inside = false;
          break;
        }
        flat = flat * target.cells[a] + std::size_t(idx);
      }
      if (inside) {
        vals[flat] += m.weights[i] / vol;
        captured += std::abs(m.weights[i]);
      }
    }
  } else if (m.grid.same_as(target)) {
    return m;
  } else {
    if (m.dim > 2) throw Unsupported("grid rebin supports d in {1,2}");
    // overlap-fraction redistribution, conservative
    auto overlap1d = [](double a0, double a1, double b0, double b1) {
      return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
    };
    std::vector<double> c(m.dim);
    for (std::size_t i = 0; i < m.grid.ncells(); ++i) {
      double mass = m.values[i] * m.grid.cell_volume();
      if (mass == 0) continue;
      m.grid.center(i, c.data());
      // source cell box
      double s0lo = c[0] - 0.5 * m.grid.cell_width(0);
      double s0hi = c[0] + 0.5 * m.grid.cell_width(0);
      int j0lo = std::max(
          0, int(std::floor((s0lo - target.lo[0]) / target.cell_width(0))));
      int j0hi = std::min(target.cells[0] - 1,
                          int(std::floor((s0hi - target.lo[0]) /
                                         target.cell_width(0))));
      if (m.dim == 1) {
        for (int j = j0lo; j <= j0hi; ++j) {
          double b0 = target.lo[0] + j * target.cell_width(0);
          double frac = overlap1d(s0lo, s0hi, b0, b0 + target.cell_width(0)) /
                        m.grid.cell_width(0);
          if (frac > 0) {
            vals[j] += mass * frac / vol;
            captured += std::abs(mass) * frac;
          }
        }
      } else {
        double s1lo = c[1] - 0.5 * m.grid.cell_width(1);
        double s1hi = c[1] + 0.5 * m.grid.cell_width(1);
        int j1lo = std::max(
            0, int(std::floor((s1lo - target.lo[1]) / target.cell_width(1))));
        int j1hi = std::min(target.cells[1] - 1,
                            int(std::floor((s1hi - target.lo[1]) /
                                           target.cell_width(1))));
        for (int j = j0lo; j <= j0hi; ++j) {
          double b0 = target.lo[0] + j * target.cell_width(0);
          double f0 = overlap1d(s0lo, s0hi, b0, b0 + target.cell_width(0)) /
                      m.grid.cell_width(0);
          for (int k = j1lo; k <= j1hi; ++k) {
            double b1 = target.lo[1] + k * target.cell_width(1);
            double f1 = overlap1d(s1lo, s1hi, b1, b1 + target.cell_width(1)) /
                        m.grid.cell_width(1);
            if (f0 * f1 > 0) {
              vals[std::size_t(j) * target.cells[1] + k] +=
                  mass * f0 * f1 / vol;
              captured += std::abs(mass) * f0 * f1;
            }
          }
        }
      }
    }
  }
  double total = m.total_abs_mass();
  if (total > 0 && captured < (1.0 - mass_tol) * total)
    throw MassLoss("rebin target box loses more than mass_tol of |m|");
  return Measure::grid_density(target, std::move(vals));
}

}  // namespace mkv
