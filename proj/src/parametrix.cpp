#include "mkvsde/parametrix.hpp"
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mkvsde/kato.hpp"
#include "mkvsde/rng.hpp"

namespace mkv {

namespace {

// symmetric d x d matrices, d <= 2, packed [a00] or [a00, a01, a11]
struct Sym {
  double m[3] = {0, 0, 0};
};

inline Sym sym_from(const double* row, int dim) {
  Sym s;
  if (dim == 1) {
    s.m[0] = row[0];
  } else {
    s.m[0] = row[0];
    s.m[1] = 0.5 * (row[1] + row[2]);
    s.m[2] = row[3];
  }
  return s;
}

inline double sym_det(const Sym& a, int dim) {
  return dim == 1 ? a.m[0] : a.m[0] * a.m[2] - a.m[1] * a.m[1];
}

inline Sym sym_inv(const Sym& a, int dim, double det) {
  Sym r;
  if (dim == 1) {
    r.m[0] = 1.0 / a.m[0];
  } else {
    r.m[0] = a.m[2] / det;
    r.m[1] = -a.m[1] / det;
    r.m[2] = a.m[0] / det;
  }
  return r;
}

inline void sym_eigs(const Sym& a, int dim, double* lo, double* hi) {
  if (dim == 1) {
    *lo = *hi = a.m[0];
    return;
  }
  double tr = a.m[0] + a.m[2];
  double disc = std::sqrt(sqr(a.m[0] - a.m[2]) + 4 * sqr(a.m[1]));
  *lo = 0.5 * (tr - disc);
  *hi = 0.5 * (tr + disc);
}

inline double quad_form(const Sym& a, const double* u, int dim) {
  if (dim == 1) return a.m[0] * u[0] * u[0];
  return a.m[0] * u[0] * u[0] + 2 * a.m[1] * u[0] * u[1] +
         a.m[2] * u[1] * u[1];
}

struct Gauss {
  Sym Ainv;
  double det = 0;
  int dim = 1;
  double norm = 0;  // 1/sqrt((4 pi)^d det A)

  double value(const double* u) const {
    return norm * std::exp(-0.25 * quad_form(Ainv, u, dim));
  }
  void grad(const double* u, double* g) const {
    double v = value(u);
    if (dim == 1) {
      g[0] = -0.5 * Ainv.m[0] * u[0] * v;
    } else {
      g[0] = -0.5 * (Ainv.m[0] * u[0] + Ainv.m[1] * u[1]) * v;
      g[1] = -0.5 * (Ainv.m[1] * u[0] + Ainv.m[2] * u[1]) * v;
    }
  }
  void hess(const double* u, double* h) const {
    double v = value(u);
    if (dim == 1) {
      double w = Ainv.m[0] * u[0];
      h[0] = (0.25 * w * w - 0.5 * Ainv.m[0]) * v;
      return;
    }
    double w0 = Ainv.m[0] * u[0] + Ainv.m[1] * u[1];
    double w1 = Ainv.m[1] * u[0] + Ainv.m[2] * u[1];
    h[0] = (0.25 * w0 * w0 - 0.5 * Ainv.m[0]) * v;
    h[1] = (0.25 * w0 * w1 - 0.5 * Ainv.m[1]) * v;
    h[2] = (0.25 * w1 * w1 - 0.5 * Ainv.m[2]) * v;
  }
};

Gauss make_gauss(const Sym& A, int dim) {
  double det = sym_det(A, dim);
  double lo, hi;
  sym_eigs(A, dim, &lo, &hi);
  if (!(lo > 0) || !(det > 0))
    throw EllipticityError("frozen covariance is not SPD");
  Gauss g;
  g.dim = dim;
  g.det = det;
  g.Ainv = sym_inv(A, dim, det);
  g.norm = 1.0 / std::sqrt(std::pow(4.0 * M_PI, dim) * det);
  return g;
}

// int_s^t a(tau, y) dtau by 8-node Gauss-Legendre
Sym covariance_quad(const CoefficientField& c, double s, double t,
                    std::span<const double> y) {
  static const Quadrature gl = gauss_legendre(8);
  Sym A;
  double row[4];
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
    double tau = 0.5 * (s + t) + 0.5 * (t - s) * gl.nodes[i];
    c.a_eval(tau, y, row);
    Sym a = sym_from(row, c.dim);
    double w = 0.5 * (t - s) * gl.weights[i];
    for (int k = 0; k < 3; ++k) A.m[k] += w * a.m[k];
  }
  return A;
}

}  // namespace

double frozen_gaussian(const CoefficientField& c, double s,
                       std::span<const double> x, double t,
                       std::span<const double> y) {
  if (!(s < t)) throw DomainError("frozen_gaussian needs s < t");
  Sym A = covariance_quad(c, s, t, y);
  Gauss g = make_gauss(A, c.dim);
  double u[2] = {x[0] - y[0], c.dim == 2 ? x[1] - y[1] : 0.0};
  return g.value(u);
}

void frozen_gaussian_derivs(const CoefficientField& c, double s,
                            std::span<const double> x, double t,
                            std::span<const double> y, double* value,
                            double* grad, double* hess) {
  if (!(s < t)) throw DomainError("frozen_gaussian_derivs needs s < t");
  Sym A = covariance_quad(c, s, t, y);
  Gauss g = make_gauss(A, c.dim);
  double u[2] = {x[0] - y[0], c.dim == 2 ? x[1] - y[1] : 0.0};
  if (value) *value = g.value(u);
  if (grad) g.grad(u, grad);
  if (hess) g.hess(u, hess);
}

void parametrix_term_parts(const CoefficientField& c, double tau,
                           std::span<const double> z, double t,
                           std::span<const double> y, double* a_part,
                           double* b_part) {
  if (!(tau < t)) throw DomainError("parametrix term needs tau < t");
  Sym A = covariance_quad(c, tau, t, y);
  Gauss g = make_gauss(A, c.dim);
  double u[2] = {z[0] - y[0], c.dim == 2 ? z[1] - y[1] : 0.0};
  *a_part = 0;
  *b_part = 0;
  if (!c.a_constant_in_x) {
    double az[4], ay[4], h[3] = {0, 0, 0};
    c.a_eval(tau, z, az);
    c.a_eval(tau, y, ay);
    Sym daz = sym_from(az, c.dim), day = sym_from(ay, c.dim);
    g.hess(u, h);
    if (c.dim == 1) {
      *a_part = (daz.m[0] - day.m[0]) * h[0];
    } else {
      *a_part = (daz.m[0] - day.m[0]) * h[0] +
                2 * (daz.m[1] - day.m[1]) * h[1] +
                (daz.m[2] - day.m[2]) * h[2];
    }
  }
  if (c.has_drift()) {
    double bv[2] = {0, 0}, gr[2] = {0, 0};
    c.b_eval(tau, z, bv);
    g.grad(u, gr);
    *b_part = bv[0] * gr[0] + (c.dim == 2 ? bv[1] * gr[1] : 0.0);
    if (!std::isfinite(*b_part)) *b_part = 0;  // declared singular node
  }
}

double parametrix_term(const CoefficientField& c, double tau,
                       std::span<const double> z, double t,
                       std::span<const double> y) {
  double ap, bp;
  parametrix_term_parts(c, tau, z, t, y, &ap, &bp);
  return ap + bp;
}

void validate_coefficients(const CoefficientField& c, const SpatialGrid& box,
                           int t_samples, double sample_tol) {
  if (c.dim != 1 && c.dim != 2)
    throw Unsupported("coefficients support d in {1,2}");
  double invp = std::isfinite(c.p) ? 1 / c.p : 0;
  double invq = std::isfinite(c.q) ? 1 / c.q : 0;
  if (c.has_drift() && c.dim * invp + 2 * invq >= 1.0)
    throw IndexSetError("drift indices outside I_1 (d/p + 2/q >= 1)");
  const std::size_t n = box.ncells();
  std::vector<double> ctr(c.dim), ctr2(c.dim);
  double row[4];
  for (int it = 0; it < t_samples; ++it) {
    double t = (it + 0.5) / t_samples;
    for (std::size_t i = 0; i < n; i += std::max<std::size_t>(1, n / 64)) {
      box.center(i, ctr.data());
      c.a_eval(t, ctr, row);
      Sym a = sym_from(row, c.dim);
      double lo, hi;
      sym_eigs(a, c.dim, &lo, &hi);
      if (lo < 1.0 / c.Lambda / (1 + sample_tol) ||
          hi > c.Lambda * (1 + sample_tol))
        throw EllipticityError("eigenvalues of a leave [1/Lambda, Lambda]");
      std::size_t j = (i + n / 7 + 1) % n;
      box.center(j, ctr2.data());
      double dist = 0;
      for (int k = 0; k < c.dim; ++k) dist += sqr(ctr[k] - ctr2[k]);
      dist = std::sqrt(dist);
      if (dist > 1e-12) {
        double row2[4];
        c.a_eval(t, ctr2, row2);
        double dmax = 0;
        for (int k = 0; k < c.dim * c.dim; ++k)
          dmax = std::max(dmax, std::abs(row[k] - row2[k]));
        if (dmax > c.N1 * (1 + sample_tol) * std::pow(dist, c.alpha))
          throw AssumptionViolation("Holder seminorm of a exceeds N1");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// series construction
// ---------------------------------------------------------------------------

namespace {

// product-integration weights for int_{w0}^{tstar} h(tau) (tstar-tau)^e dtau
// with h piecewise linear on the lattice nodes and frozen on the final cell
struct TauWeights {
  std::vector<std::vector<double>> w;  // [j][m], m in [1, j)
  std::vector<double> w_end;           // [j]: weight of the sifting limit
};

double mom0(double a, double b, double tstar, double e) {
  return (std::pow(tstar - a, e + 1) - std::pow(tstar - b, e + 1)) / (e + 1);
}
double mom1(double a, double b, double tstar, double e) {
  return tstar * mom0(a, b, tstar, e) -
         (std::pow(tstar - a, e + 2) - std::pow(tstar - b, e + 2)) / (e + 2);
}

TauWeights make_tau_weights(const std::vector<double>& lat, double w0,
                            double e) {
  const int M = int(lat.size());
  TauWeights tw;
  tw.w.resize(M + 1);
  tw.w_end.assign(M + 1, 0.0);
  for (int j = 1; j <= M; ++j) {
    double tstar = lat[j - 1];
    std::vector<double> hat(std::size_t(j), 0.0);
    auto node_t = [&](int m) { return m == 0 ? w0 : lat[m - 1]; };
    for (int m = 0; m + 1 <= j - 1; ++m) {
      double a = node_t(m), b = node_t(m + 1);
      double d = b - a;
      double m0 = mom0(a, b, tstar, e), m1 = mom1(a, b, tstar, e);
      hat[m] += (b * m0 - m1) / d;
      hat[m + 1] += (m1 - a * m0) / d;
    }
    // terminal cell [tau_{j-1}, tstar]: h extended linearly from the last
    // two nodes (frozen when only one node is available)
    {
      double a = node_t(j - 1);
      double m0 = mom0(a, tstar, tstar, e);
      if (j >= 3) {
        double a2 = node_t(j - 2);
        double m1 = mom1(a, tstar, tstar, e);
        double slope_w = (m1 - a * m0) / (a - a2);
        hat[j - 1] += m0 + slope_w;
        hat[j - 2] -= slope_w;
      } else {
        hat[j - 1] += m0;
      }
    }
    tw.w[j].assign(std::size_t(j), 0.0);
    for (int m = 1; m <= j - 1; ++m)
      tw.w[j][m] = hat[m] * std::pow(tstar - node_t(m), -e);
    tw.w_end[j] = hat[0] * std::pow(tstar - w0, -e);
  }
  return tw;
}

struct WindowTables {
  std::vector<double> lattice;  // tau_1..tau_M, last = w1 (w0 excluded)
  int M = 0;
  std::size_t nz = 0;
  int dim = 1;
  std::vector<double> zc;
  double zvol = 0;
  std::vector<Sym> a_tab;       // [(M+1)][nz], row 0 at w0
  std::vector<double> b_tab;    // [(M+1)][nz][dim]
  std::vector<Sym> C_tab;       // [(M+1)][nz] cumulative int a
  std::vector<double> phiA, phiB;  // [pair][z][y]
  std::vector<std::size_t> pair_off;
  std::vector<char> narrow_tgt;  // [(M+1)^2]: t_j - tau_m unresolved on grid
  TauWeights twA, twB;
  bool use_a = false, use_b = false;

  std::size_t pidx(int m, int j) const {
    return pair_off[std::size_t(m) * (M + 1) + j];
  }
  bool is_narrow(int m, int j) const {
    return narrow_tgt[std::size_t(m) * (M + 1) + j] != 0;
  }
};

WindowTables build_tables(const CoefficientField& c, double w0,
                          const std::vector<double>& lattice,
                          const SpatialGrid& zgrid) {
  WindowTables T;
  T.lattice = lattice;
  T.M = int(lattice.size());
  T.dim = c.dim;
  T.nz = zgrid.ncells();
  T.zvol = zgrid.cell_volume();
  T.zc.resize(T.nz * c.dim);
  for (std::size_t i = 0; i < T.nz; ++i)
    zgrid.center(i, T.zc.data() + i * c.dim);
  T.use_a = !c.a_constant_in_x;
  T.use_b = c.has_drift();

  const int M = T.M;
  T.a_tab.resize(std::size_t(M + 1) * T.nz);
  if (T.use_b) T.b_tab.assign(std::size_t(M + 1) * T.nz * c.dim, 0.0);
  T.C_tab.resize(std::size_t(M + 1) * T.nz);
  static const Quadrature gl4 = gauss_legendre(4);
  parallel_for(T.nz, [&](std::size_t iz) {
    std::span<const double> z(T.zc.data() + iz * c.dim, std::size_t(c.dim));
    double row[4], bv[2];
    Sym C;
    double prev_t = w0;
    for (int m = 0; m <= M; ++m) {
      double tm = (m == 0) ? w0 : lattice[m - 1];
      c.a_eval(tm, z, row);
      T.a_tab[std::size_t(m) * T.nz + iz] = sym_from(row, c.dim);
      if (T.use_b) {
        c.b_eval(tm, z, bv);
        for (int k = 0; k < c.dim; ++k) {
          double v = bv[k];
          if (!std::isfinite(v)) v = 0;  // node avoidance at declared blowups
          T.b_tab[(std::size_t(m) * T.nz + iz) * c.dim + k] = v;
        }
      }
      if (m > 0) {
        for (std::size_t g = 0; g < gl4.nodes.size(); ++g) {
          double tau = 0.5 * (prev_t + tm) + 0.5 * (tm - prev_t) * gl4.nodes[g];
          c.a_eval(tau, z, row);
          Sym aa = sym_from(row, c.dim);
          double w = 0.5 * (tm - prev_t) * gl4.weights[g];
          for (int k = 0; k < 3; ++k) C.m[k] += w * aa.m[k];
        }
        prev_t = tm;
      }
      T.C_tab[std::size_t(m) * T.nz + iz] = C;
    }
  });

  // In d = 1 every pair integrates in z by Gauss-Hermite against the
  // Gaussian factor of Phi (exact sampling of the near-singular scales,
  // branch-free so paired kernels never take different quadrature paths,
  // and no pair tables to build). d = 2 keeps the tabulated path.
  T.narrow_tgt.assign(std::size_t(M + 1) * (M + 1), c.dim == 1 ? 1 : 0);
  T.pair_off.assign(std::size_t(M + 1) * (M + 1), 0);
  std::size_t np = 0;
  for (int m = 1; m < M; ++m)
    for (int j = m + 1; j <= M; ++j)
      T.pair_off[std::size_t(m) * (M + 1) + j] = np++;
  const std::size_t slab = T.nz * T.nz;
  if (T.use_a) T.phiA.assign(np * slab, 0.0);
  if (T.use_b) T.phiB.assign(np * slab, 0.0);
  if (np && (T.use_a || T.use_b)) {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(np);
    for (int m = 1; m < M; ++m)
      for (int j = m + 1; j <= M; ++j)
        if (!T.is_narrow(m, j)) pairs.push_back({m, j});
    parallel_for(pairs.size(), [&](std::size_t pi) {
      auto [m, j] = pairs[pi];
      const std::size_t off = T.pidx(m, j) * slab;
      for (std::size_t iy = 0; iy < T.nz; ++iy) {
        Sym A;
        for (int k = 0; k < 3; ++k)
          A.m[k] = T.C_tab[std::size_t(j) * T.nz + iy].m[k] -
                   T.C_tab[std::size_t(m) * T.nz + iy].m[k];
        Gauss g = make_gauss(A, c.dim);
        const Sym& ay = T.a_tab[std::size_t(m) * T.nz + iy];
        const double* yc = T.zc.data() + iy * c.dim;
        for (std::size_t iz = 0; iz < T.nz; ++iz) {
          const double* zc = T.zc.data() + iz * c.dim;
          double u[2] = {zc[0] - yc[0], c.dim == 2 ? zc[1] - yc[1] : 0.0};
          if (T.use_a) {
            const Sym& az = T.a_tab[std::size_t(m) * T.nz + iz];
            double h[3] = {0, 0, 0};
            g.hess(u, h);
            double v = (az.m[0] - ay.m[0]) * h[0];
            if (c.dim == 2)
              v += 2 * (az.m[1] - ay.m[1]) * h[1] +
                   (az.m[2] - ay.m[2]) * h[2];
            T.phiA[off + iz * T.nz + iy] = v;
          }
          if (T.use_b) {
            double gr[2] = {0, 0};
            g.grad(u, gr);
            const double* bv = &T.b_tab[(std::size_t(m) * T.nz + iz) * c.dim];
            double v = bv[0] * gr[0] + (c.dim == 2 ? bv[1] * gr[1] : 0.0);
            T.phiB[off + iz * T.nz + iy] = v;
          }
        }
      }
    });
  }
  // Holder part keeps its genuine (t-tau)^{alpha/2-1} endpoint envelope; the
  // z-integrated drift part is bounded at the endpoint once the narrow pairs
  // are evaluated by Gauss-Hermite, so it integrates with plain weights.
  T.twA = make_tau_weights(lattice, w0, 0.5 * c.alpha - 1.0);
  T.twB = make_tau_weights(lattice, w0, 0.0);
  return T;
}

// evaluates the Phi parts at an off-grid source point, with coefficients
// taken from the tabulated rows (linear interpolation, d = 1)
struct PhiPointEval {
  const CoefficientField* c;
  const WindowTables* T;

  double cov_at(int m_row, double z) const {
    const std::size_t nz = T->nz;
    double lo = T->zc[0], hi = T->zc[(nz - 1)];
    double u = (z - lo) / (hi - lo) * (nz - 1);
    std::size_t i0 = std::min<std::size_t>(
        nz - 2, std::size_t(std::max(0.0, std::floor(u))));
    double w = std::min(1.0, std::max(0.0, u - double(i0)));
    return (1 - w) * T->C_tab[std::size_t(m_row) * nz + i0].m[0] +
           w * T->C_tab[std::size_t(m_row) * nz + i0 + 1].m[0];
  }

  void coeff_at(int m_row, double z, Sym* a_out, double* b_out) const {
    const std::size_t nz = T->nz;
    double lo = T->zc[0], hi = T->zc[(nz - 1)];
    double u = (z - lo) / (hi - lo) * (nz - 1);
    std::size_t i0 = std::min<std::size_t>(
        nz - 2, std::size_t(std::max(0.0, std::floor(u))));
    double w = std::min(1.0, std::max(0.0, u - double(i0)));
    const Sym& a0 = T->a_tab[std::size_t(m_row) * nz + i0];
    const Sym& a1 = T->a_tab[std::size_t(m_row) * nz + i0 + 1];
    for (int k = 0; k < 3; ++k)
      a_out->m[k] = (1 - w) * a0.m[k] + w * a1.m[k];
    if (T->use_b) {
      double b0 = T->b_tab[(std::size_t(m_row) * nz + i0)];
      double b1 = T->b_tab[(std::size_t(m_row) * nz + i0 + 1)];
      *b_out = (1 - w) * b0 + w * b1;
    } else {
      *b_out = 0;
    }
  }

  void parts(int m_row, const double* z, int j, std::size_t iy, double* pa,
             double* pb, bool direct_coeffs, double tau) const {
    const int dim = T->dim;
    const double* yc = T->zc.data() + iy * dim;
    Sym A;
    for (int k = 0; k < 3; ++k)
      A.m[k] = T->C_tab[std::size_t(j) * T->nz + iy].m[k] -
               T->C_tab[std::size_t(m_row) * T->nz + iy].m[k];
    Gauss g = make_gauss(A, dim);
    double u[2] = {z[0] - yc[0], dim == 2 ? z[1] - yc[1] : 0.0};
    *pa = 0;
    *pb = 0;
    Sym az;
    double bz = 0;
    if (direct_coeffs) {
      double row[4], bv[2] = {0, 0};
      c->a_eval(tau, std::span<const double>(z, std::size_t(dim)), row);
      az = sym_from(row, dim);
      if (T->use_b) {
        c->b_eval(tau, std::span<const double>(z, std::size_t(dim)), bv);
        bz = std::isfinite(bv[0]) ? bv[0] : 0.0;
      }
    } else {
      coeff_at(m_row, z[0], &az, &bz);
    }
    if (T->use_a) {
      const Sym& ay = T->a_tab[std::size_t(m_row) * T->nz + iy];
      double h[3] = {0, 0, 0};
      g.hess(u, h);
      *pa = (az.m[0] - ay.m[0]) * h[0];
      if (dim == 2)
        *pa += 2 * (az.m[1] - ay.m[1]) * h[1] + (az.m[2] - ay.m[2]) * h[2];
    }
    if (T->use_b) {
      double gr[2] = {0, 0};
      g.grad(u, gr);
      *pb = bz * gr[0];
    }
  }
};

struct WindowSeries {
  std::vector<double> sum;       // [nstart][M][nz]
  std::vector<double> term_sup;  // per order (global sup)
  double ratio = 0;
  double tail = 0;
};

WindowSeries run_series(const CoefficientField& c, double w0,
                        const WindowTables& T,
                        const std::vector<double>& starts,
                        const SeriesConfig& cfg,
                        const std::vector<double>* density = nullptr) {
  const int M = T.M;
  const std::size_t nz = T.nz;
  const std::size_t nx = density ? 1 : starts.size() / c.dim;
  const std::size_t plane = std::size_t(M) * nz;
  WindowSeries S;
  S.sum.assign(nx * plane, 0.0);
  static const Quadrature gh = gauss_hermite(20);
  static const Quadrature gl4 = gauss_legendre(4);
  const bool series_needed = T.use_a || T.use_b;
  PhiPointEval phi_pt{&c, &T};

  std::vector<double> acc_sup(nx * (cfg.n_trunc + 1), 0.0);
  std::vector<double> acc_end(nx * (cfg.n_trunc + 1), 0.0);

  parallel_for(nx, [&](std::size_t ix) {
    const double* x = starts.data() + ix * c.dim;
    std::vector<double> cur(plane, 0.0), next(plane, 0.0);
    std::vector<Sym> Cx(M + 1);
    {
      Sym C;
      double prev_t = w0, row[4];
      std::span<const double> xs(x, std::size_t(c.dim));
      for (int m = 1; m <= M; ++m) {
        double tm = T.lattice[m - 1];
        for (std::size_t g = 0; g < gl4.nodes.size(); ++g) {
          double tau = 0.5 * (prev_t + tm) + 0.5 * (tm - prev_t) * gl4.nodes[g];
          c.a_eval(tau, xs, row);
          Sym aa = sym_from(row, c.dim);
          double w = 0.5 * (tm - prev_t) * gl4.weights[g];
          for (int k = 0; k < 3; ++k) C.m[k] += w * aa.m[k];
        }
        prev_t = tm;
        Cx[m] = C;
      }
    }
    for (int m = 1; m <= M; ++m) {
      for (std::size_t iz = 0; iz < nz; ++iz) {
        Sym A = T.C_tab[std::size_t(m) * nz + iz];
        Gauss g = make_gauss(A, c.dim);
        const double* zc = T.zc.data() + iz * c.dim;
        if (!density) {
          double u[2] = {x[0] - zc[0], c.dim == 2 ? x[1] - zc[1] : 0.0};
          cur[std::size_t(m - 1) * nz + iz] = g.value(u);
          continue;
        }
        // smooth the start density by the z-frozen Gaussian
        const double width = std::sqrt(2.0 * A.m[0]);
        const double dz = T.zvol;
        double acc = 0;
        if (width < cfg.gh_width_cells * dz) {
          static const Quadrature& ghq = gh;
          double sd = 2.0 * std::sqrt(A.m[0]);
          const double zc0 = T.zc[0];
          for (std::size_t i = 0; i < ghq.nodes.size(); ++i) {
            double xp = zc[0] + sd * ghq.nodes[i];
            double u2 = (xp - zc0) / dz;
            if (u2 < -1.0 || u2 > double(nz)) continue;
            double uc = std::min(double(nz - 1) - 1e-9, std::max(0.0, u2));
            std::size_t i0 = std::min<std::size_t>(nz - 2, std::size_t(uc));
            double w = std::min(1.0, std::max(0.0, u2 - double(i0)));
            acc += ghq.weights[i] *
                   ((1 - w) * (*density)[i0] + w * (*density)[i0 + 1]);
          }
          acc /= std::sqrt(M_PI);
        } else {
          for (std::size_t ix2 = 0; ix2 < nz; ++ix2) {
            double rv = (*density)[ix2];
            if (rv == 0) continue;
            double u[2] = {T.zc[ix2] - zc[0], 0.0};
            acc += rv * g.value(u) * dz;
          }
        }
        cur[std::size_t(m - 1) * nz + iz] = acc;
      }
    }
    for (std::size_t i = 0; i < plane; ++i) S.sum[ix * plane + i] = cur[i];
    double sup0 = 0, end0 = 0;
    for (std::size_t i = 0; i < plane; ++i)
      sup0 = std::max(sup0, std::abs(cur[i]));
    for (std::size_t iz = 0; iz < nz; ++iz)
      end0 = std::max(end0, std::abs(cur[std::size_t(M - 1) * nz + iz]));
    acc_sup[ix * (cfg.n_trunc + 1)] = sup0;
    acc_end[ix * (cfg.n_trunc + 1)] = end0;
    if (!series_needed) return;

    std::vector<char> narrow(M + 1, 0);
    if (c.dim == 1 && !density) {
      double dz = T.zvol;
      for (int m = 1; m <= M; ++m)
        if (std::sqrt(2.0 * Cx[m].m[0]) < cfg.gh_width_cells * dz)
          narrow[m] = 1;
    }
    for (int n = 0; n < cfg.n_trunc; ++n) {
      std::fill(next.begin(), next.end(), 0.0);
      for (int j = 1; j <= M; ++j) {
        double* out = next.data() + std::size_t(j - 1) * nz;
        if (n == 0 && !density) {
          // sifting limit of the first convolution at tau -> w0
          double wA0 = T.use_a ? T.twA.w_end[j] : 0.0;
          double wB0 = T.use_b ? T.twB.w_end[j] : 0.0;
          for (std::size_t iy = 0; iy < nz; ++iy) {
            double pa, pb;
            phi_pt.parts(0, x, j, iy, &pa, &pb, true, w0);
            out[iy] += wA0 * pa + wB0 * pb;
          }
        }
        for (int m = 1; m < j; ++m) {
          double wa = T.use_a ? T.twA.w[j][m] : 0.0;
          double wb = T.use_b ? T.twB.w[j][m] : 0.0;
          if (density && n == 0 && m == 1 && j > 1) {
            // smooth start: the endpoint value equals the first-node value
            // up to O(tau_1), so its weight folds onto node 1
            double t1 = T.lattice[0], tj = T.lattice[j - 1];
            double eA = 0.5 * c.alpha - 1.0;
            if (T.use_a)
              wa += T.twA.w_end[j] *
                    std::pow((tj - w0) / (tj - t1), eA);
            if (T.use_b) wb += T.twB.w_end[j];
          }
          if (n == 0 && c.dim == 1 && !density) {
            // First convolution: both factors are analytic Gaussians, so the
            // z-integral runs against their exact product Gaussian. This
            // resolves every width combination, including adjacent lattice
            // pairs whose Phi factor is far narrower than the source.
            const double A1s = Cx[m].m[0];
            for (std::size_t iy = 0; iy < nz; ++iy) {
              double A2 = T.C_tab[std::size_t(j) * nz + iy].m[0] -
                          T.C_tab[std::size_t(m) * nz + iy].m[0];
              double y0 = T.zc[iy];
              double Abar = A1s * A2 / (A1s + A2);
              double ctr = (A2 * x[0] + A1s * y0) / (A1s + A2);
              double lgK = -sqr(x[0] - y0) / (4.0 * (A1s + A2));
              double norm2 = 1.0 / std::sqrt(4.0 * M_PI * A2);
              double ay = T.a_tab[std::size_t(m) * nz + iy].m[0];
              double ga = 0, gb = 0;
              for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
                double zp = ctr + 2.0 * std::sqrt(Abar) * gh.nodes[i];
                Sym az;
                double bz;
                phi_pt.coeff_at(m, zp, &az, &bz);
                // exact source Gaussian with its own z-frozen covariance;
                // all exponents combine in log space (the prefactor can
                // underflow exactly where the freeze correction overflows)
                double A1z = phi_pt.cov_at(m, zp);
                double du = zp - x[0];
                double lg = lgK - du * du / (4.0 * A1z) +
                            du * du / (4.0 * A1s);
                if (lg < -700.0) continue;
                double norm1 = 1.0 / std::sqrt(4.0 * M_PI * A1z);
                double common =
                    gh.weights[i] * norm1 * norm2 * std::exp(lg);
                double v = zp - y0;
                if (T.use_a)
                  ga += common * (az.m[0] - ay) *
                        (v * v / (4.0 * A2 * A2) - 0.5 / A2);
                if (T.use_b) gb += common * bz * (-v / (2.0 * A2));
              }
              double scale = 2.0 * std::sqrt(Abar);
              out[iy] += scale * (wa * ga + wb * gb);
            }
            continue;
          }
          if (T.is_narrow(m, j)) {
            // Gauss-Hermite around each target y against the narrow Gaussian
            // factor of Phi, with p_n and the coefficients interpolated
            const double* srcrow = cur.data() + std::size_t(m - 1) * nz;
            const double zc0 = T.zc[0];
            const double dz = T.zvol;
            auto pn_at = [&](double zp) {
              double u = (zp - zc0) / dz;
              if (u < -1.0 || u > double(nz)) return 0.0;
              double uc = std::min(double(nz - 1) - 1e-9, std::max(0.0, u));
              std::size_t i0 =
                  std::min<std::size_t>(nz - 2, std::size_t(uc));
              double w = std::min(1.0, std::max(0.0, u - double(i0)));
              return (1 - w) * srcrow[i0] + w * srcrow[i0 + 1];
            };
            for (std::size_t iy = 0; iy < nz; ++iy) {
              double A = T.C_tab[std::size_t(j) * nz + iy].m[0] -
                         T.C_tab[std::size_t(m) * nz + iy].m[0];
              double sd = 2.0 * std::sqrt(A);
              double ay = T.a_tab[std::size_t(m) * nz + iy].m[0];
              double y0 = T.zc[iy];
              double ga = 0, gb = 0;
              for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
                double xi = gh.nodes[i];
                double zp = y0 + sd * xi;
                double pn = pn_at(zp);
                if (pn == 0) continue;
                Sym az;
                double bz;
                phi_pt.coeff_at(m, zp, &az, &bz);
                if (T.use_a)
                  ga += gh.weights[i] * pn * (az.m[0] - ay) *
                        (xi * xi - 0.5) / A;
                if (T.use_b)
                  gb += gh.weights[i] * pn * bz * (-xi / std::sqrt(A));
              }
              out[iy] += (wa * ga + wb * gb) / std::sqrt(M_PI);
            }
            continue;
          }
          const double* src = cur.data() + std::size_t(m - 1) * nz;
          const std::size_t slab = nz * nz;
          if (T.use_a) {
            const double* tab = T.phiA.data() + T.pidx(m, j) * slab;
            for (std::size_t iz = 0; iz < nz; ++iz) {
              double sv = src[iz] * T.zvol * wa;
              if (sv == 0) continue;
              const double* row = tab + iz * nz;
              for (std::size_t iy = 0; iy < nz; ++iy) out[iy] += sv * row[iy];
            }
          }
          if (T.use_b) {
            const double* tab = T.phiB.data() + T.pidx(m, j) * slab;
            for (std::size_t iz = 0; iz < nz; ++iz) {
              double sv = src[iz] * T.zvol * wb;
              if (sv == 0) continue;
              const double* row = tab + iz * nz;
              for (std::size_t iy = 0; iy < nz; ++iy) out[iy] += sv * row[iy];
            }
          }
        }
      }
      double supn = 0, endn = 0;
      for (std::size_t i = 0; i < plane; ++i)
        supn = std::max(supn, std::abs(next[i]));
      for (std::size_t iz = 0; iz < nz; ++iz)
        endn = std::max(endn, std::abs(next[std::size_t(M - 1) * nz + iz]));
      acc_sup[ix * (cfg.n_trunc + 1) + n + 1] = supn;
      acc_end[ix * (cfg.n_trunc + 1) + n + 1] = endn;
      for (std::size_t i = 0; i < plane; ++i) S.sum[ix * plane + i] += next[i];
      cur.swap(next);
      if (supn == 0) break;
    }
  });

  S.term_sup.assign(cfg.n_trunc + 1, 0.0);
  for (std::size_t ix = 0; ix < nx; ++ix)
    for (int n = 0; n <= cfg.n_trunc; ++n)
      S.term_sup[n] =
          std::max(S.term_sup[n], acc_sup[ix * (cfg.n_trunc + 1) + n]);
  double ratio = 0, last_end = 0;
  for (int n = 0; n < cfg.n_trunc; ++n) {
    double num = 0, den = 0;
    for (std::size_t ix = 0; ix < nx; ++ix) {
      num = std::max(num, acc_end[ix * (cfg.n_trunc + 1) + n + 1]);
      den = std::max(den, acc_end[ix * (cfg.n_trunc + 1) + n]);
    }
    if (den > 0 && num > 0) ratio = std::max(ratio, num / den);
    if (n == cfg.n_trunc - 1) last_end = num;
  }
  S.ratio = ratio;
  S.tail = (ratio < 1.0 && ratio > 0) ? last_end * ratio / (1 - ratio) : 0.0;
  return S;
}

std::vector<double> window_lattice(double w0, double w1,
                                   std::span<const double> outputs,
                                   const SeriesConfig& cfg) {
  std::vector<double> lat;
  for (double t : outputs)
    if (t > w0 + 1e-14 && t <= w1 + 1e-14) lat.push_back(std::min(t, w1));
  for (int j = 1; j <= cfg.tau_nodes; ++j)
    lat.push_back(w0 + (w1 - w0) * std::pow(double(j) / cfg.tau_nodes,
                                            cfg.tau_grading));
  lat.push_back(w1);
  std::sort(lat.begin(), lat.end());
  std::vector<double> out;
  for (double t : lat)
    if (out.empty() || t - out.back() > 1e-12 * std::max(1.0, w1))
      out.push_back(t);
  if (std::abs(out.back() - w1) > 1e-12)
    out.push_back(w1);
  else
    out.back() = w1;
  return out;
}

}  // namespace

SpatialGrid coarsen_grid(const SpatialGrid& g, int max_cells) {
  SpatialGrid out = g;
  for (int a = 0; a < g.dim; ++a) {
    int c = g.cells[a];
    while (c > max_cells && c % 2 == 0) c /= 2;
    out.cells[a] = c;
  }
  return out;
}

double KernelGrid::mass(std::size_t ix, std::size_t it) const {
  std::vector<double> terms(ny());
  for (std::size_t iy = 0; iy < ny(); ++iy) terms[iy] = at(ix, it, iy);
  return pairwise_sum(terms) * ygrid.cell_volume();
}

Measure KernelGrid::marginal(const std::vector<double>& xi_weights,
                             std::size_t it) const {
  if (xi_weights.size() != nx())
    throw GridMismatch("marginal weights must match start points");
  std::vector<double> vals(ny(), 0.0);
  for (std::size_t ix = 0; ix < nx(); ++ix) {
    double w = xi_weights[ix];
    if (w == 0) continue;
    for (std::size_t iy = 0; iy < ny(); ++iy) vals[iy] += w * at(ix, it, iy);
  }
  return Measure::grid_density(ygrid, std::move(vals));
}

KernelGrid heat_kernel(const CoefficientField& c, const KernelRequest& req,
                       const SeriesConfig& cfg_in) {
  if (c.dim != 1 && c.dim != 2)
    throw Unsupported("heat_kernel supports d in {1,2}");
  if (req.t_nodes.empty() || req.x_nodes.empty())
    throw ParamOutOfRange("empty kernel request");
  for (std::size_t i = 0; i < req.t_nodes.size(); ++i)
    if (req.t_nodes[i] <= req.s ||
        (i > 0 && req.t_nodes[i] <= req.t_nodes[i - 1]))
      throw ParamOutOfRange("t_nodes must be increasing and > s");
  SeriesConfig cfg = cfg_in;
  if (cfg.lambda_report <= 0) cfg.lambda_report = 0.2 / c.Lambda;

  KernelGrid kg;
  kg.dim = c.dim;
  kg.s = req.s;
  kg.t_nodes = req.t_nodes;
  kg.x_nodes = req.x_nodes;
  kg.ygrid = req.ygrid;
  kg.cfg = cfg;
  const std::size_t nx = kg.nx(), nt = kg.nt(), nzc = kg.ygrid.ncells();
  kg.values.assign(nx * nt * nzc, 0.0);
  kg.term_sup.assign(cfg.n_trunc + 1, 0.0);

  const double t_end = req.t_nodes.back();
  double w0 = req.s;
  double Tw = std::min(cfg.t_window, t_end - req.s);
  std::vector<double> state;  // p(s, x_i; w0, z) once a window is done
  bool have_state = false;
  std::vector<double> zstarts(nzc * c.dim);
  for (std::size_t i = 0; i < nzc; ++i)
    kg.ygrid.center(i, zstarts.data() + i * c.dim);

  int guard = 0, windows = 0;
  while (w0 < t_end - 1e-13) {
    if (++guard > 4096) throw SeriesDiverging("window composition stalled");
    double w1 = std::min(w0 + Tw, t_end);
    auto lattice = window_lattice(w0, w1, req.t_nodes, cfg);
    const std::vector<double>& starts = have_state ? zstarts : req.x_nodes;
    WindowTables T = build_tables(c, w0, lattice, kg.ygrid);
    WindowSeries S = run_series(c, w0, T, starts, cfg);
    if (S.ratio > cfg.ratio_accept && Tw > cfg.t_window_min * (1 + 1e-12)) {
      Tw = std::max(0.5 * Tw, cfg.t_window_min);
      continue;
    }
    if (S.ratio > cfg.ratio_fail)
      throw SeriesDiverging(
          "parametrix term ratio exceeds ratio_fail at the minimal window");
    ++windows;
    kg.term_ratio = std::max(kg.term_ratio, S.ratio);
    kg.tail_estimate = std::max(kg.tail_estimate, S.tail);
    for (int n = 0; n <= cfg.n_trunc; ++n)
      kg.term_sup[n] = std::max(kg.term_sup[n], S.term_sup[n]);
    const int M = T.M;
    const double vol = kg.ygrid.cell_volume();
    for (std::size_t it = 0; it < nt; ++it) {
      double t = req.t_nodes[it];
      if (t <= w0 + 1e-13 || t > w1 + 1e-13) continue;
      int jlat = -1;
      for (int j = 1; j <= M; ++j)
        if (std::abs(T.lattice[j - 1] - t) <= 1e-11) jlat = j;
      if (jlat < 0) throw SeriesDiverging("output node missing from lattice");
      for (std::size_t ix = 0; ix < nx; ++ix) {
        double* dst = kg.values.data() + (ix * nt + it) * nzc;
        if (!have_state) {
          const double* src =
              S.sum.data() + (ix * std::size_t(M) + (jlat - 1)) * nzc;
          std::memcpy(dst, src, nzc * sizeof(double));
        } else {
          for (std::size_t iy = 0; iy < nzc; ++iy) dst[iy] = 0;
          for (std::size_t iz = 0; iz < nzc; ++iz) {
            double sv = state[ix * nzc + iz] * vol;
            if (sv == 0) continue;
            const double* src =
                S.sum.data() + (iz * std::size_t(M) + (jlat - 1)) * nzc;
            for (std::size_t iy = 0; iy < nzc; ++iy) dst[iy] += sv * src[iy];
          }
        }
      }
    }
    std::vector<double> new_state(nx * nzc, 0.0);
    for (std::size_t ix = 0; ix < nx; ++ix) {
      if (!have_state) {
        const double* src =
            S.sum.data() + (ix * std::size_t(M) + (M - 1)) * nzc;
        std::memcpy(new_state.data() + ix * nzc, src, nzc * sizeof(double));
      } else {
        double* dst = new_state.data() + ix * nzc;
        for (std::size_t iz = 0; iz < nzc; ++iz) {
          double sv = state[ix * nzc + iz] * vol;
          if (sv == 0) continue;
          const double* src =
              S.sum.data() + (iz * std::size_t(M) + (M - 1)) * nzc;
          for (std::size_t iy = 0; iy < nzc; ++iy) dst[iy] += sv * src[iy];
        }
      }
    }
    state.swap(new_state);
    have_state = true;
    w0 = w1;
  }
  kg.windows_used = windows;

  double clip = 0, vmax = 0;
  for (double v : kg.values) vmax = std::max(vmax, v);
  const double neg_floor = -cfg.neg_tol * std::max(1.0, vmax);
  for (double& v : kg.values) {
    if (v < 0) {
      clip = std::max(clip, -v);
      if (v < neg_floor)
        throw SeriesDiverging("negative kernel values beyond neg_tol");
      v = 0;
    }
  }
  kg.max_clip = clip;
  double defect = 0;
  for (std::size_t ix = 0; ix < nx; ++ix)
    for (std::size_t it = 0; it < nt; ++it) {
      double m = kg.mass(ix, it);
      defect = std::max(defect, std::abs(m - 1.0));
      if (cfg.renormalize_mass && m > 0) {
        double* dst = kg.values.data() + (ix * nt + it) * nzc;
        for (std::size_t iy = 0; iy < nzc; ++iy) dst[iy] /= m;
      }
    }
  kg.mass_defect_max = defect;
  return kg;
}

KernelGrid evolve_density(const CoefficientField& c, const KernelRequest& req,
                          const std::vector<double>& rho0,
                          const SeriesConfig& cfg_in) {
  if (c.dim != 1) throw Unsupported("evolve_density is implemented for d = 1");
  if (rho0.size() != req.ygrid.ncells())
    throw GridMismatch("rho0 must live on req.ygrid");
  SeriesConfig cfg = cfg_in;
  if (cfg.lambda_report <= 0) cfg.lambda_report = 0.2 / c.Lambda;

  KernelGrid kg;
  kg.dim = 1;
  kg.s = req.s;
  kg.t_nodes = req.t_nodes;
  kg.x_nodes = {0.0};  // single virtual start
  kg.ygrid = req.ygrid;
  kg.cfg = cfg;
  const std::size_t nt = kg.nt(), nzc = kg.ygrid.ncells();
  kg.values.assign(nt * nzc, 0.0);
  kg.term_sup.assign(cfg.n_trunc + 1, 0.0);

  const double t_end = req.t_nodes.back();
  double w0 = req.s;
  double Tw = std::min(cfg.t_window, t_end - req.s);
  std::vector<double> state = rho0;
  std::vector<double> dummy_start = {0.0};
  int guard = 0, windows = 0;
  while (w0 < t_end - 1e-13) {
    if (++guard > 4096) throw SeriesDiverging("window composition stalled");
    double w1 = std::min(w0 + Tw, t_end);
    auto lattice = window_lattice(w0, w1, req.t_nodes, cfg);
    auto tb0 = std::chrono::steady_clock::now();
    WindowTables T = build_tables(c, w0, lattice, kg.ygrid);
    auto tb1 = std::chrono::steady_clock::now();
    WindowSeries S = run_series(c, w0, T, dummy_start, cfg, &state);
    auto tb2 = std::chrono::steady_clock::now();
    if (getenv("MKV_PROF"))
      fprintf(stderr, "window [%g,%g] M=%d tables=%.0fms series=%.0fms ratio=%.3f\n",
              w0, w1, T.M,
              std::chrono::duration<double, std::milli>(tb1 - tb0).count(),
              std::chrono::duration<double, std::milli>(tb2 - tb1).count(), S.ratio);
    if (S.ratio > cfg.ratio_accept && Tw > cfg.t_window_min * (1 + 1e-12)) {
      Tw = std::max(0.5 * Tw, cfg.t_window_min);
      continue;
    }
    if (S.ratio > cfg.ratio_fail)
      throw SeriesDiverging(
          "parametrix term ratio exceeds ratio_fail at the minimal window");
    ++windows;
    kg.term_ratio = std::max(kg.term_ratio, S.ratio);
    kg.tail_estimate = std::max(kg.tail_estimate, S.tail);
    for (int n = 0; n <= cfg.n_trunc; ++n)
      kg.term_sup[n] = std::max(kg.term_sup[n], S.term_sup[n]);
    const int M = T.M;
    for (std::size_t it = 0; it < nt; ++it) {
      double t = req.t_nodes[it];
      if (t <= w0 + 1e-13 || t > w1 + 1e-13) continue;
      int jlat = -1;
      for (int j = 1; j <= M; ++j)
        if (std::abs(T.lattice[j - 1] - t) <= 1e-11) jlat = j;
      if (jlat < 0) throw SeriesDiverging("output node missing from lattice");
      std::memcpy(kg.values.data() + it * nzc,
                  S.sum.data() + std::size_t(jlat - 1) * nzc,
                  nzc * sizeof(double));
    }
    state.assign(S.sum.begin() + std::size_t(M - 1) * nzc,
                 S.sum.begin() + std::size_t(M) * nzc);
    w0 = w1;
  }
  kg.windows_used = windows;
  double clip = 0, vmax = 0;
  for (double v : kg.values) vmax = std::max(vmax, v);
  const double neg_floor = -cfg.neg_tol * std::max(1.0, vmax);
  for (double& v : kg.values) {
    if (v < 0) {
      clip = std::max(clip, -v);
      if (v < neg_floor)
        throw SeriesDiverging("negative kernel values beyond neg_tol");
      v = 0;
    }
  }
  kg.max_clip = clip;
  double defect = 0;
  for (std::size_t it = 0; it < nt; ++it)
    defect = std::max(defect, std::abs(kg.mass(0, it) - 1.0));
  kg.mass_defect_max = defect;
  return kg;
}

KernelGrid spacetime_convolve(const KernelGrid& p,
                              const SpaceTimeEvaluator& q) {
  KernelGrid out = p;
  std::fill(out.values.begin(), out.values.end(), 0.0);
  const std::size_t nx = p.nx(), nt = p.nt(), ny = p.ny();
  TauWeights tw = make_tau_weights(p.t_nodes, p.s, q.endpoint_exponent);
  std::vector<double> yc(ny * p.dim);
  for (std::size_t i = 0; i < ny; ++i)
    out.ygrid.center(i, yc.data() + i * p.dim);
  parallel_for(nx, [&](std::size_t ix) {
    for (std::size_t j = 1; j <= nt; ++j) {
      double t = p.t_nodes[j - 1];
      double* dst = out.values.data() + (ix * nt + (j - 1)) * ny;
      for (std::size_t iy = 0; iy < ny; ++iy) {
        std::span<const double> yv(yc.data() + iy * p.dim, std::size_t(p.dim));
        double acc = 0;
        for (std::size_t m = 1; m < j; ++m) {
          double tau = p.t_nodes[m - 1];
          double g = 0;
          for (std::size_t iz = 0; iz < ny; ++iz) {
            double pv = p.at(ix, m - 1, iz);
            if (pv == 0) continue;
            std::span<const double> zv(yc.data() + iz * p.dim,
                                       std::size_t(p.dim));
            g += pv * q.eval(tau, zv, t, yv);
          }
          acc += tw.w[j][m] * g * p.ygrid.cell_volume();
        }
        if (q.left_kernel_is_delta) {
          std::span<const double> xv(p.x_nodes.data() + ix * p.dim,
                                     std::size_t(p.dim));
          acc += tw.w_end[j] * q.eval(p.s, xv, t, yv);
        }
        dst[iy] = acc;
      }
    }
  });
  return out;
}

KernelGrid compose_kernels(const KernelGrid& left, const KernelGrid& right) {
  if (!left.ygrid.same_as(right.ygrid))
    throw GridMismatch("composition needs a shared spatial grid");
  if (std::abs(left.t_nodes.back() - right.s) > 1e-12)
    throw GridMismatch("left kernel must end at right kernel's start");
  if (right.nx() != right.ny())
    throw GridMismatch("right kernel must start from the shared grid");
  KernelGrid out;
  out.dim = left.dim;
  out.s = left.s;
  out.t_nodes = right.t_nodes;
  out.x_nodes = left.x_nodes;
  out.ygrid = left.ygrid;
  out.cfg = left.cfg;
  const std::size_t nx = left.nx(), nz = left.ny(), nt = right.nt();
  out.values.assign(nx * nt * nz, 0.0);
  const std::size_t last = left.nt() - 1;
  const double vol = left.ygrid.cell_volume();
  for (std::size_t ix = 0; ix < nx; ++ix)
    for (std::size_t it = 0; it < nt; ++it) {
      double* dst = out.values.data() + (ix * nt + it) * nz;
      for (std::size_t iz = 0; iz < nz; ++iz) {
        double sv = left.at(ix, last, iz) * vol;
        if (sv == 0) continue;
        for (std::size_t iy = 0; iy < nz; ++iy)
          dst[iy] += sv * right.at(iz, it, iy);
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// certifications
// ---------------------------------------------------------------------------

CertReport verify_two_sided(const KernelGrid& kg, double fit_tol,
                            double reliability_floor) {
  const std::size_t nx = kg.nx(), nt = kg.nt(), ny = kg.ny();
  double pmax = 0;
  for (double v : kg.values) pmax = std::max(pmax, v);
  if (pmax <= 0) throw NoEnvelope("kernel vanishes identically");
  const double floor = reliability_floor * pmax;
  std::vector<double> yc(ny * kg.dim);
  for (std::size_t i = 0; i < ny; ++i)
    kg.ygrid.center(i, yc.data() + i * kg.dim);
  struct Cell {
    double tau, u2, p;
  };
  std::vector<Cell> cells;
  cells.reserve(kg.values.size() / 4);
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const double* x = kg.x_nodes.data() + ix * kg.dim;
    for (std::size_t it = 0; it < nt; ++it) {
      double tau = kg.t_nodes[it] - kg.s;
      for (std::size_t iy = 0; iy < ny; ++iy) {
        const double* y = yc.data() + iy * kg.dim;
        double u2 = sqr(x[0] - y[0]);
        if (kg.dim == 2) u2 += sqr(x[1] - y[1]);
        double p = kg.at(ix, it, iy);
        if (u2 <= tau && p <= 0)
          throw NoEnvelope("kernel vanishes on a diagonal-core cell");
        if (p >= floor) cells.push_back({tau, u2, p});
      }
    }
  }
  const int d = kg.dim;
  auto logC_up = [&](double lam) {
    double worst = -1e300;
    for (const auto& cl : cells)
      worst = std::max(worst, std::log(cl.p) + 0.5 * d * std::log(cl.tau) +
                                  lam * cl.u2 / cl.tau);
    return worst;
  };
  auto logC_lo = [&](double rate) {
    double worst = -1e300;
    for (const auto& cl : cells)
      worst = std::max(worst, -0.5 * d * std::log(cl.tau) -
                                  rate * cl.u2 / cl.tau - std::log(cl.p));
    return worst;
  };
  std::vector<double> lams;
  for (int i = 0; i <= 160; ++i)
    lams.push_back(0.02 * std::pow(250.0, i / 160.0));
  double base_up = logC_up(lams.front());
  double lam_up = lams.front();
  for (double l : lams)
    if (logC_up(l) <= base_up + std::log1p(fit_tol)) lam_up = std::max(lam_up, l);
  double base_lo = logC_lo(lams.back());
  double rate_lo = lams.back();
  for (double l : lams)
    if (logC_lo(l) <= base_lo + std::log1p(fit_tol)) rate_lo = std::min(rate_lo, l);
  CertReport rep;
  rep.lambda_upper = lam_up;
  rep.lambda_lower = rate_lo;
  rep.lhs_sup = std::exp(logC_up(lam_up));   // upper-envelope constant
  rep.rhs = std::exp(logC_lo(rate_lo));      // lower-envelope constant
  rep.fitted_C = std::max(rep.lhs_sup, rep.rhs);
  rep.note = "lhs_sup = upper constant, rhs = lower constant";
  if (!std::isfinite(rep.fitted_C))
    throw NoEnvelope("no finite envelope constant on the grid");
  return rep;
}

CertReport verify_holder(const KernelGrid& kg, const CoefficientField& c,
                         HolderAxis axis, double gamma, double lambda,
                         double reliability_floor) {
  double g0 = c.gamma0();
  if (!(gamma > 0) || gamma >= std::min(c.alpha, g0))
    throw ParamOutOfRange("gamma must lie in (0, min(alpha, gamma0))");
  const std::size_t nx = kg.nx(), nt = kg.nt(), ny = kg.ny();
  double pmax = 0;
  for (double v : kg.values) pmax = std::max(pmax, v);
  const double floor = reliability_floor * pmax;
  std::vector<double> yc(ny * kg.dim);
  for (std::size_t i = 0; i < ny; ++i)
    kg.ygrid.center(i, yc.data() + i * kg.dim);
  double worst = 0;
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const double* x = kg.x_nodes.data() + ix * kg.dim;
    if (axis == HolderAxis::Time) {
      for (std::size_t iy = 0; iy < ny; ++iy) {
        const double* y = yc.data() + iy * kg.dim;
        double u = std::sqrt(sqr(x[0] - y[0]) +
                             (kg.dim == 2 ? sqr(x[1] - y[1]) : 0.0));
        for (std::size_t i1 = 0; i1 < nt; ++i1)
          for (std::size_t i2 = i1 + 1; i2 < nt; ++i2) {
            double p1 = kg.at(ix, i1, iy), p2 = kg.at(ix, i2, iy);
            if (std::max(p1, p2) < floor) continue;
            double dt = kg.t_nodes[i2] - kg.t_nodes[i1];
            double denom =
                std::pow(dt, 0.5 * gamma) *
                (rho_radial(lambda, -gamma, kg.dim, kg.t_nodes[i1] - kg.s, u) +
                 rho_radial(lambda, -gamma, kg.dim, kg.t_nodes[i2] - kg.s, u));
            if (denom > 0) worst = std::max(worst, std::abs(p2 - p1) / denom);
          }
      }
    } else {
      for (std::size_t it = 0; it < nt; ++it) {
        double tau = kg.t_nodes[it] - kg.s;
        for (std::size_t iy1 = 0; iy1 < ny; ++iy1) {
          double p1 = kg.at(ix, it, iy1);
          const double* y1 = yc.data() + iy1 * kg.dim;
          double u1 = std::sqrt(sqr(x[0] - y1[0]) +
                                (kg.dim == 2 ? sqr(x[1] - y1[1]) : 0.0));
          for (std::size_t iy2 = iy1 + 1; iy2 < ny; ++iy2) {
            double p2 = kg.at(ix, it, iy2);
            if (std::max(p1, p2) < floor) continue;
            const double* y2 = yc.data() + iy2 * kg.dim;
            double dy = std::sqrt(sqr(y1[0] - y2[0]) +
                                  (kg.dim == 2 ? sqr(y1[1] - y2[1]) : 0.0));
            double u2 = std::sqrt(sqr(x[0] - y2[0]) +
                                  (kg.dim == 2 ? sqr(x[1] - y2[1]) : 0.0));
            double denom = std::pow(dy, gamma) *
                           (rho_radial(lambda, -gamma, kg.dim, tau, u1) +
                            rho_radial(lambda, -gamma, kg.dim, tau, u2));
            if (denom > 0) worst = std::max(worst, std::abs(p2 - p1) / denom);
          }
        }
      }
    }
  }
  CertReport rep;
  rep.fitted_C = worst;
  return rep;
}

CertReport kernel_stability(const CoefficientField& ca,
                            const CoefficientField& cb,
                            const KernelRequest& req, const SeriesConfig& cfg,
                            double r, double eta) {
  double g0 = ca.gamma0();
  if (!(r > 2.0 / g0)) throw ParamOutOfRange("need r > 2/gamma0");
  if (!(eta > 2.0 / (2.0 + ca.alpha * r)) || !(eta < 1))
    throw ParamOutOfRange("need eta in (2/(2+alpha r), 1)");
  KernelGrid ka = heat_kernel(ca, req, cfg);
  KernelGrid kb = heat_kernel(cb, req, cfg);
  const std::size_t nx = ka.nx(), nt = ka.nt(), ny = ka.ny();
  double lambda = ka.cfg.lambda_report;
  std::vector<double> yc(ny * ka.dim);
  for (std::size_t i = 0; i < ny; ++i)
    ka.ygrid.center(i, yc.data() + i * ka.dim);
  double pmax = 0;
  for (double v : ka.values) pmax = std::max(pmax, v);
  double floor = 1e-8 * pmax;
  double lhs = 0;
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const double* x = ka.x_nodes.data() + ix * ka.dim;
    for (std::size_t it = 0; it < nt; ++it) {
      double tau = ka.t_nodes[it] - ka.s;
      for (std::size_t iy = 0; iy < ny; ++iy) {
        double pa = ka.at(ix, it, iy), pb = kb.at(ix, it, iy);
        if (std::max(pa, pb) < floor) continue;
        const double* y = yc.data() + iy * ka.dim;
        double u = std::sqrt(sqr(x[0] - y[0]) +
                             (ka.dim == 2 ? sqr(x[1] - y[1]) : 0.0));
        double denom = rho_radial(lambda, -2.0 / r, ka.dim, tau, u);
        if (denom > 0) lhs = std::max(lhs, std::abs(pa - pb) / denom);
      }
    }
  }
  auto sup_da = [&](double t) {
    double worst = 0;
    double rowa[4], rowb[4];
    std::vector<double> cc(ka.dim);
    for (std::size_t i = 0; i < ny; ++i) {
      ka.ygrid.center(i, cc.data());
      ca.a_eval(t, cc, rowa);
      cb.a_eval(t, cc, rowb);
      for (int k = 0; k < ka.dim * ka.dim; ++k)
        worst = std::max(worst, std::abs(rowa[k] - rowb[k]));
    }
    return worst;
  };
  double da;
  if (std::isfinite(r)) {
    auto ts = linspace(req.s, req.t_nodes.back(), 17);
    double acc = 0, prev = std::pow(sup_da(ts[0] + 1e-12), r);
    for (std::size_t i = 1; i < ts.size(); ++i) {
      double cur = std::pow(sup_da(ts[i]), r);
      acc += 0.5 * (cur + prev) * (ts[i] - ts[i - 1]);
      prev = cur;
    }
    da = std::pow(acc, 1.0 / r);
  } else {
    da = 0;
    for (double t : linspace(req.s, req.t_nodes.back(), 17))
      da = std::max(da, sup_da(t + 1e-12));
  }
  double db = 0;
  if (ca.has_drift() || cb.has_drift()) {
    SpaceTimeField diff;
    diff.dim = ca.dim;
    diff.time_lo = req.s;
    diff.time_hi = req.t_nodes.back();
    double extent = 0;
    for (int a = 0; a < ka.dim; ++a)
      extent = std::max(extent, std::max(std::abs(req.ygrid.lo[a]),
                                         std::abs(req.ygrid.hi[a])));
    diff.support_radius = extent;
    const CoefficientField* pa = &ca;
    const CoefficientField* pb = &cb;
    diff.eval = [pa, pb](double t, std::span<const double> x) {
      double b1[2] = {0, 0}, b2[2] = {0, 0};
      if (pa->has_drift()) pa->b_eval(t, x, b1);
      if (pb->has_drift()) pb->b_eval(t, x, b2);
      double s = 0;
      for (std::size_t k = 0; k < x.size(); ++k) s += sqr(b1[k] - b2[k]);
      return std::sqrt(s);
    };
    db = lpq_norm(diff, ca.p, ca.q, std::min(1.0, req.t_nodes.back()));
  }
  CertReport rep;
  rep.lhs_sup = lhs;
  rep.rhs = std::pow(da, 1.0 - eta) + db;
  rep.ratio = rep.rhs > 0 ? lhs / rep.rhs : 0.0;
  rep.fitted_C = rep.ratio;
  return rep;
}

PropertyReport det_perturbation_check(int dim, double Lambda, double a_scale,
                                      int n_samples, std::uint64_t seed) {
  if (dim != 1 && dim != 2) throw Unsupported("det check supports d in {1,2}");
  CounterRng rng{seed};
  auto rand_spd = [&](std::uint64_t tag, double scale, Sym* out) {
    double lo = scale / Lambda, hi = scale * Lambda;
    if (dim == 1) {
      out->m[0] = lo + (hi - lo) * rng.uniform(tag, 0);
      return;
    }
    double l1 = lo + (hi - lo) * rng.uniform(tag, 0);
    double l2 = lo + (hi - lo) * rng.uniform(tag, 1);
    double th = M_PI * rng.uniform(tag, 2);
    double cs = std::cos(th), sn = std::sin(th);
    out->m[0] = cs * cs * l1 + sn * sn * l2;
    out->m[1] = cs * sn * (l1 - l2);
    out->m[2] = sn * sn * l1 + cs * cs * l2;
  };
  auto max_entry_diff = [&](const Sym& A, const Sym& B) {
    double d0 = std::abs(A.m[0] - B.m[0]);
    if (dim == 1) return d0;
    return std::max(
        {d0, std::abs(A.m[1] - B.m[1]), std::abs(A.m[2] - B.m[2])});
  };
  const double C1 = (dim == 1) ? 1.0 : 4.0 * Lambda;
  const double C2 = (dim == 1) ? Lambda : 5.0 * Lambda * Lambda;
  PropertyReport rep;
  rep.n_samples = std::size_t(n_samples);
  double worst1 = 0, worst2 = 0;
  std::size_t viol = 0;
  for (int i = 0; i < n_samples; ++i) {
    Sym A, At, B;
    rand_spd(3 * std::uint64_t(i), a_scale, &A);
    rand_spd(3 * std::uint64_t(i) + 1, a_scale, &At);
    double lhs = std::abs(sym_det(A, dim) - sym_det(At, dim));
    double dd = max_entry_diff(A, At);
    if (dd > 0) {
      double ratio = lhs / (std::pow(a_scale, dim - 1) * dd);
      worst1 = std::max(worst1, ratio);
      if (ratio > C1 * (1 + 1e-9)) ++viol;
    }
    double b_scale = a_scale * (0.05 + 0.95 * rng.uniform(3 * i + 2, 7));
    rand_spd(3 * std::uint64_t(i) + 2, b_scale, &B);
    Sym AB;
    for (int k = 0; k < 3; ++k) AB.m[k] = A.m[k] + B.m[k];
    double lhs2 = std::abs(sym_det(AB, dim) - sym_det(A, dim));
    double ratio2 = lhs2 / (std::pow(a_scale, dim - 1) * b_scale);
    worst2 = std::max(worst2, ratio2);
    if (ratio2 > C2 * (1 + 1e-9)) ++viol;
  }
  rep.fitted_C = std::max(worst1, worst2);
  rep.n_violations = viol;
  rep.passed = (viol == 0) && std::isfinite(rep.fitted_C);
  rep.lhs = worst1;
  rep.rhs = worst2;
  rep.note = "ratios against C1=" + std::to_string(C1) +
             ", C2=" + std::to_string(C2);
  return rep;
}

}  // namespace mkv
