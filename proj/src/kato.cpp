#include "mkvsde/kato.hpp"

#include <algorithm>
#include <cmath>

namespace mkv {

double eta_beta_radial(double beta, int dim, double t, double r) {
  if (t <= 0) throw DomainError("eta_beta needs t > 0");
  if (beta < 0) throw DomainError("eta_beta needs beta >= 0");
  return std::pow(std::sqrt(t) + r, -double(dim) - beta);
}

double eta_beta(double beta, double t, std::span<const double> x) {
  return eta_beta_radial(beta, int(x.size()), t, norm2(x));
}

double rho_radial(double lambda, double gamma, int dim, double t, double r) {
  if (t <= 0) throw DomainError("rho needs t > 0");
  if (lambda <= 0) throw DomainError("rho needs lambda > 0");
  return std::pow(t, 0.5 * (-dim + gamma)) * std::exp(-lambda * r * r / t);
}

double rho_profile(double lambda, double gamma, double t,
                   std::span<const double> x) {
  return rho_radial(lambda, gamma, int(x.size()), t, norm2(x));
}

double cutoff_chi(double r) {
  r = std::abs(r);
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  double u = r - 1.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

namespace {

// ---- kato functional ------------------------------------------------------

struct DirQuad {
  int J, n_lin, n_log, angular;
  double R;
};

// int_0^inf eta(s,r) * f-ring(r) dr with a linear mesh on [0, 8 sqrt(s)] and
// a geometric mesh out to R.
double y_integral(const SpaceTimeField& f, double beta, double s, double teval,
                  std::span<const double> x0, const DirQuad& dq, int sign) {
  const int d = f.dim;
  const double knee = std::min(8.0 * std::sqrt(s), dq.R);
  std::vector<double> rs;
  rs.reserve(dq.n_lin + dq.n_log + 2);
  for (int i = 0; i <= dq.n_lin; ++i) rs.push_back(knee * i / dq.n_lin);
  if (dq.R > knee * (1 + 1e-12)) {
    double ratio = std::pow(dq.R / knee, 1.0 / dq.n_log);
    double r = knee;
    for (int i = 1; i <= dq.n_log; ++i) {
      r *= ratio;
      rs.push_back(std::min(r, dq.R));
    }
  }
  // ring sum of |f| at radius r
  std::vector<double> xb(d);
  auto ring = [&](double r) -> double {
    if (d == 1) {
      xb[0] = x0[0] + sign * r;
      double v = std::abs(f(teval, xb));
      xb[0] = x0[0] - sign * r;
      v += std::abs(f(teval, xb));
      return v;  // both rays, measure dr
    }
    // d == 2: r * int |f| dtheta
    double acc = 0;
    for (int a = 0; a < dq.angular; ++a) {
      double th = 2.0 * M_PI * (a + 0.5) / dq.angular;
      xb[0] = x0[0] + sign * r * std::cos(th);
      xb[1] = x0[1] + sign * r * std::sin(th);
      acc += std::abs(f(teval, xb));
    }
    return acc * (2.0 * M_PI / dq.angular) * r;
  };
  double acc = 0, prev_r = rs[0];
  double prev_v = eta_beta_radial(beta, d, s, prev_r) * ring(prev_r);
  for (std::size_t i = 1; i < rs.size(); ++i) {
    double r = rs[i];
    if (r <= prev_r) continue;
    double v = eta_beta_radial(beta, d, s, r) * ring(r);
    acc += 0.5 * (v + prev_v) * (r - prev_r);
    prev_r = r;
    prev_v = v;
  }
  return acc;
}

// one direction (sign=+1 forward, -1 backward) at base point (t0, x0)
double direction_integral(const SpaceTimeField& f, double beta, double T,
                          double t0, std::span<const double> x0,
                          const DirQuad& dq, int sign) {
  // s = T u^2 grading; transformed integrand 2 T u G(T u^2)
  std::vector<double> g(dq.J + 1, 0.0);
  for (int j = 1; j <= dq.J; ++j) {
    double u = double(j) / dq.J;
    double s = T * u * u;
    double teval = t0 + sign * s;
    g[j] = 2.0 * T * u * y_integral(f, beta, s, teval, x0, dq, sign);
  }
  // the transformed integrand has a finite limit at u = 0; extrapolate
  g[0] = std::max(0.0, 2.0 * g[1] - g[2]);
  double acc = 0;
  for (int j = 0; j < dq.J; ++j) acc += 0.5 * (g[j] + g[j + 1]) / dq.J;
  return acc;
}

struct KatoEval {
  double value, fwd, bwd, base_t;
  std::vector<double> base_x;
  std::size_t cells;
};

KatoEval kato_eval(const SpaceTimeField& f, double beta, double T,
                   const KatoConfig& cfg, double scale) {
  const int d = f.dim;
  if (d != 1 && d != 2) throw Unsupported("kato_functional supports d in {1,2}");
  DirQuad dq;
  double s = cfg.resolution_scale * scale;
  dq.J = std::max(8, int(cfg.s_nodes * s));
  dq.n_lin = std::max(8, int(cfg.y_linear * s));
  dq.n_log = std::max(8, int(cfg.y_log * s));
  dq.angular = std::max(8, int(cfg.angular * s));
  // base-point lattices
  std::vector<double> t_list;
  const bool lo_inf = !std::isfinite(f.time_lo);
  const bool hi_inf = !std::isfinite(f.time_hi);
  if (lo_inf && hi_inf) {
    t_list = {0.0};
  } else if (lo_inf) {
    t_list = linspace(f.time_hi - 1.0 - T, f.time_hi, cfg.time_lattice);
  } else if (hi_inf) {
    t_list = linspace(f.time_lo, f.time_lo + 1.0 + T, cfg.time_lattice);
  } else {
    t_list = linspace(f.time_lo - T, f.time_hi, cfg.time_lattice);
  }
  double extent = f.support_radius ? *f.support_radius * cfg.lattice_inflate
                                   : cfg.lattice_inflate * 2.0;
  std::vector<std::vector<double>> x_list;
  if (d == 1) {
    for (double x : linspace(-extent, extent, cfg.space_lattice))
      x_list.push_back({x});
  } else {
    int side = std::max(3, int(std::lround(std::sqrt(double(cfg.space_lattice)))));
    for (double x : linspace(-extent, extent, side))
      for (double y : linspace(-extent, extent, side)) x_list.push_back({x, y});
  }
  KatoEval best{-1.0, 0, 0, 0, std::vector<double>(d, 0.0), 0};
  std::vector<KatoEval> per_base(t_list.size() * x_list.size());
  parallel_for(per_base.size(), [&](std::size_t idx) {
    std::size_t it = idx / x_list.size(), ix = idx % x_list.size();
    const auto& x0 = x_list[ix];
    DirQuad dql = dq;
    if (f.support_radius)
      dql.R = *f.support_radius + norm2(x0) + 1e-9;
    else
      dql.R = cfg.r_outer_factor * std::sqrt(T);
    double fw = direction_integral(f, beta, T, t_list[it], x0, dql, +1);
    double bw = direction_integral(f, beta, T, t_list[it], x0, dql, -1);
    per_base[idx] = {fw + bw, fw, bw, t_list[it], x0, 0};
  });
  for (const auto& pe : per_base)
    if (pe.value > best.value) best = pe;
  best.cells = std::size_t(dq.J) * (dq.n_lin + dq.n_log) * 2 * per_base.size();
  return best;
}

}  // namespace

KatoReport kato_functional(const SpaceTimeField& f, double beta, double T,
                           const KatoConfig& cfg) {
  if (T <= 0 || T > 1.0 + 1e-12) throw DomainError("K needs T in (0,1]");
  if (beta < 0) throw DomainError("K needs beta >= 0");
  KatoEval lo = kato_eval(f, beta, T, cfg, 0.5);
  KatoEval hi = kato_eval(f, beta, T, cfg, 1.0);
  KatoReport rep;
  rep.beta = beta;
  rep.T = T;
  double est = std::abs(hi.value - lo.value);
  if (hi.value > (1.0 + cfg.divergence_growth) * lo.value &&
      hi.value > 1e-12) {
    KatoEval xx = kato_eval(f, beta, T, cfg, 2.0);
    if (xx.value > (1.0 + cfg.divergence_growth) * hi.value)
      throw Divergent("kato functional grows without bound under refinement");
    est = std::abs(xx.value - hi.value);
    hi = xx;
  }
  rep.value = hi.value;
  rep.forward_part = hi.fwd;
  rep.backward_part = hi.bwd;
  rep.base_t = hi.base_t;
  rep.base_x = hi.base_x;
  rep.quadrature_cells = hi.cells;
  rep.est_error = est;
  return rep;
}

// ---- localized L^p_q norm --------------------------------------------------

namespace {

struct LpqLevel {
  int nodes;
  int graded;
  double r_min;
};

double spatial_lp(const SpaceTimeField& f, double p, double t, double zc0,
                  double zc1, const LpqLevel& lv) {
  const int d = f.dim;
  const bool sup_norm = !std::isfinite(p);
  auto chi_at = [&](std::span<const double> x) {
    double dx0 = x[0] - zc0;
    double r = (d == 1) ? std::abs(dx0) : std::hypot(dx0, x[1] - zc1);
    return cutoff_chi(r);
  };
  if (d == 1) {
    std::vector<double> xs;
    xs.reserve(lv.nodes + 4 * lv.graded + 8);
    for (int i = 0; i <= lv.nodes; ++i)
      xs.push_back(zc0 - 2.0 + 4.0 * i / lv.nodes);
    for (const auto& sp : f.singular_points) {
      double s = sp[0];
      if (s <= zc0 - 2.0 || s >= zc0 + 2.0) continue;
      double ratio = std::pow(2.0 / lv.r_min, 1.0 / lv.graded);
      double r = lv.r_min;
      for (int i = 0; i < lv.graded; ++i, r *= ratio) {
        if (s + r < zc0 + 2.0) xs.push_back(s + r);
        if (s - r > zc0 - 2.0) xs.push_back(s - r);
      }
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    auto near_singular = [&](double x) {
      for (const auto& sp : f.singular_points)
        if (std::abs(x - sp[0]) < 0.25 * lv.r_min) return true;
      return false;
    };
    double acc = 0, sup = 0, prev_x = 0, prev_v = 0;
    bool have_prev = false;
    for (double x : xs) {
      if (near_singular(x)) continue;
      double xv[1] = {x};
      double val = std::abs(f(t, std::span<const double>(xv, 1))) * chi_at(std::span<const double>(xv, 1));
      double vp = sup_norm ? val : std::pow(val, p);
      if (sup_norm) sup = std::max(sup, val);
      if (have_prev && !sup_norm) acc += 0.5 * (vp + prev_v) * (x - prev_x);
      prev_x = x;
      prev_v = vp;
      have_prev = true;
    }
    return sup_norm ? sup : acc;
  }
  // d == 2: tensor mesh with radial clusters around singular points
  int n = std::max(24, lv.nodes / 4);
  std::vector<double> xs0, xs1;
  for (int i = 0; i <= n; ++i) {
    xs0.push_back(zc0 - 2.0 + 4.0 * i / n);
    xs1.push_back(zc1 - 2.0 + 4.0 * i / n);
  }
  double acc = 0, sup = 0;
  double h = 4.0 / n;
  std::vector<double> xv(2);
  for (double x0 : xs0)
    for (double x1 : xs1) {
      xv[0] = x0;
      xv[1] = x1;
      bool skip = false;
      for (const auto& sp : f.singular_points)
        if (std::hypot(x0 - sp[0], x1 - sp[1]) < 0.5 * h) skip = true;
      if (skip) continue;
      double val = std::abs(f(t, xv)) * chi_at(xv);
      if (sup_norm)
        sup = std::max(sup, val);
      else
        acc += std::pow(val, p) * h * h;
    }
  // radial refinement around singular points (midpoint rings)
  if (!sup_norm) {
    for (const auto& sp : f.singular_points) {
      double ratio = std::pow((0.5 * h) / lv.r_min, 1.0 / lv.graded);
      double r = lv.r_min;
      for (int i = 0; i < lv.graded; ++i) {
        double r2 = r * ratio;
        double rm = 0.5 * (r + r2);
        double ring = 0;
        for (int a = 0; a < 16; ++a) {
          double th = 2 * M_PI * (a + 0.5) / 16;
          xv[0] = sp[0] + rm * std::cos(th);
          xv[1] = sp[1] + rm * std::sin(th);
          ring += std::pow(std::abs(f(t, xv)) * chi_at(xv), p);
        }
        acc += ring / 16 * 2 * M_PI * rm * (r2 - r);
        r = r2;
      }
    }
  }
  return sup_norm ? sup : acc;
}

double lpq_at_level(const SpaceTimeField& f, double p, double q, double T,
                    const LpqConfig& cfg, const LpqLevel& lv) {
  const int d = f.dim;
  double extent = f.support_radius
                      ? *f.support_radius + 2.0
                      : cfg.default_extent;
  std::vector<double> zs;
  int nz = std::max(1, int(std::ceil(2.0 * extent / cfg.center_spacing)) + 1);
  zs = linspace(-extent, extent, nz);
  const double t_lo = std::max(0.0, f.time_lo);
  const double t_hi = std::min(T, f.time_hi);
  if (t_hi <= t_lo) return 0.0;
  const bool q_inf = !std::isfinite(q);
  const bool p_inf = !std::isfinite(p);
  double best = 0;
  std::vector<double> per_z(d == 1 ? zs.size() : zs.size() * zs.size(), 0.0);
  parallel_for(per_z.size(), [&](std::size_t zi) {
    double zc0 = d == 1 ? zs[zi] : zs[zi / zs.size()];
    double zc1 = d == 1 ? 0.0 : zs[zi % zs.size()];
    auto lp_at = [&](double t) {
      double sp = spatial_lp(f, p, t, zc0, zc1, lv);
      return p_inf ? sp : std::pow(sp, 1.0 / p);
    };
    double val;
    if (f.time_independent) {
      double s = lp_at(0.5 * (t_lo + t_hi));
      val = q_inf ? s : s * std::pow(t_hi - t_lo, 1.0 / q);
    } else if (q_inf) {
      val = 0;
      for (double t : linspace(t_lo, t_hi, cfg.t_nodes))
        val = std::max(val, lp_at(t));
    } else {
      auto ts = linspace(t_lo, t_hi, cfg.t_nodes);
      double acc = 0, prev = std::pow(lp_at(ts[0]), q);
      for (std::size_t i = 1; i < ts.size(); ++i) {
        double cur = std::pow(lp_at(ts[i]), q);
        acc += 0.5 * (cur + prev) * (ts[i] - ts[i - 1]);
        prev = cur;
      }
      val = std::pow(acc, 1.0 / q);
    }
    per_z[zi] = val;
  });
  for (double v : per_z) best = std::max(best, v);
  return best;
}

}  // namespace

double lpq_norm(const SpaceTimeField& f, double p, double q, double T,
                const LpqConfig& cfg) {
  if (std::isfinite(p) && p < 1) throw DomainError("lpq_norm needs p >= 1");
  if (std::isfinite(q) && q < 1) throw DomainError("lpq_norm needs q >= 1");
  if (T <= 0) throw DomainError("lpq_norm needs T > 0");
  double S[3];
  for (int lvl = 0; lvl < 3; ++lvl) {
    LpqLevel lv;
    lv.nodes = cfg.base_nodes << lvl;
    lv.graded = cfg.graded_nodes << lvl;
    lv.r_min = cfg.r_min * std::pow(16.0, -lvl);
    S[lvl] = lpq_at_level(f, p, q, T, cfg, lv);
  }
  const double g = cfg.divergence_growth;
  if (S[2] > (1 + g) * S[1] && S[1] > (1 + g) * S[0] && S[2] > 1e-12)
    throw Divergent("lpq_norm grows under refinement");
  double d1 = S[1] - S[0], d2 = S[2] - S[1];
  if (d1 > 0.02 * std::max(S[0], 1e-12) && d2 > 0.8 * d1)
    throw Divergent("lpq_norm increments do not contract (borderline case)");
  return S[2];
}

// ---- certifications --------------------------------------------------------

CertReport check_rho_vs_eta(double lambda, double beta, int dim, int n_t,
                            int n_r) {
  if (lambda <= 0 || beta < 0) throw DomainError("bad lambda/beta");
  CertReport rep;
  rep.worst_point.assign(1, 0.0);
  double worst = 0;
  for (int i = 0; i < n_t; ++i) {
    double t = std::pow(10.0, -6.0 + 6.0 * i / (n_t - 1));
    for (int j = -1; j < n_r; ++j) {
      double r = (j < 0) ? 0.0 : std::pow(10.0, -6.0 + 7.3 * j / (n_r - 1));
      double ratio = rho_radial(lambda, -beta, dim, t, r) /
                     eta_beta_radial(beta, dim, t, r);
      if (ratio > worst) {
        worst = ratio;
        rep.worst_t = t;
        rep.worst_point[0] = r;
      }
    }
  }
  rep.fitted_C = worst;
  return rep;
}

ScalingReport check_kvsl(const SpaceTimeField& f, double beta, double p,
                         double q, std::span<const double> T_list,
                         const KatoConfig& kcfg, const LpqConfig& lcfg) {
  const int d = f.dim;
  double invp = std::isfinite(p) ? 1.0 / p : 0.0;
  double invq = std::isfinite(q) ? 1.0 / q : 0.0;
  if (std::isfinite(p) && (p < 2 || d * invp + 2 * invq >= 2 - beta))
    throw IndexSetError("(p,q) outside the index set for this beta");
  if (T_list.size() < 2) throw ParamOutOfRange("need at least two T values");
  ScalingReport rep;
  rep.slope_expected = 0.5 * (2.0 - beta - d * invp - 2.0 * invq);
  rep.T_list.assign(T_list.begin(), T_list.end());
  for (double T : T_list) {
    rep.K_values.push_back(kato_functional(f, beta, T, kcfg).value);
    rep.norm_values.push_back(lpq_norm(f, p, q, T, lcfg));
  }
  double kmax = *std::max_element(rep.K_values.begin(), rep.K_values.end());
  if (kmax < 1e-300) {
    rep.zero_field = true;
    return rep;
  }
  // least squares of log(K/norm) on log T
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < rep.T_list.size(); ++i) {
    double n = rep.norm_values[i];
    if (n <= 0) continue;
    xs.push_back(std::log(rep.T_list[i]));
    ys.push_back(std::log(rep.K_values[i] / n));
  }
  double xm = 0, ym = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xm += xs[i];
    ym += ys[i];
  }
  xm /= xs.size();
  ym /= ys.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - xm) * (ys[i] - ym);
    sxx += sqr(xs[i] - xm);
  }
  rep.slope = sxy / sxx;
  double c = 0;
  for (std::size_t i = 0; i < rep.T_list.size(); ++i)
    if (rep.norm_values[i] > 0)
      c = std::max(c, rep.K_values[i] /
                          (std::pow(rep.T_list[i], rep.slope_expected) *
                           rep.norm_values[i]));
  rep.fitted_C = c;
  return rep;
}

double convolution_lhs(const SpaceTimeField& b, double beta,
                       double beta_prime, double lambda, double s, double t,
                       double x, double y, const ConvBoundConfig& cfg,
                       double scale) {
  const int ntau = std::max(8, int(cfg.tau_nodes * scale));
  const int nz = std::max(32, int(cfg.z_nodes * scale));
  const double mid = 0.5 * (s + t);
  // tau nodes graded toward both endpoints (power-4 clustering)
  std::vector<double> taus;
  for (int j = 1; j <= ntau; ++j) {
    double w = double(j) / (ntau + 1);
    taus.push_back(s + (mid - s) * std::pow(w, 4.0));
    taus.push_back(t - (t - mid) * std::pow(w, 4.0));
  }
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  auto inner_z = [&](double tau) {
    // z mesh: uniform across the box plus Gaussian-width clusters at x and y
    std::vector<double> zs;
    double lo = std::min(x, y) - cfg.box_halfwidth;
    double hi = std::max(x, y) + cfg.box_halfwidth;
    for (int i = 0; i <= nz; ++i) zs.push_back(lo + (hi - lo) * i / nz);
    double wx = std::sqrt((tau - s) / (2 * lambda));
    double wy = std::sqrt((t - tau) / (4 * lambda));
    for (int i = -16; i <= 16; ++i) {
      zs.push_back(x + wx * i * 0.4);
      zs.push_back(y + wy * i * 0.4);
    }
    std::sort(zs.begin(), zs.end());
    zs.erase(std::unique(zs.begin(), zs.end()), zs.end());
    double acc = 0, prev_z = 0, prev_v = 0;
    bool have = false;
    for (double z : zs) {
      double zv[1] = {z};
      double bv = std::abs(b(tau, std::span<const double>(zv, 1)));
      if (!std::isfinite(bv)) bv = 0;  // node-avoidance at declared blowups
      double v = rho_radial(lambda, -beta_prime, 1, tau - s, std::abs(x - z)) *
                 bv *
                 rho_radial(2 * lambda, -beta, 1, t - tau, std::abs(z - y));
      if (have) acc += 0.5 * (v + prev_v) * (z - prev_z);
      prev_z = z;
      prev_v = v;
      have = true;
    }
    return acc;
  };
  double acc = 0, prev_tau = 0, prev_v = 0;
  bool have = false;
  for (double tau : taus) {
    double v = inner_z(tau);
    if (have) acc += 0.5 * (v + prev_v) * (tau - prev_tau);
    prev_tau = tau;
    prev_v = v;
    have = true;
  }
  return acc;
}

CertReport check_convolution_bound(const SpaceTimeField& b, double beta,
                                   double beta_prime, double lambda, double s,
                                   double t, const ConvBoundConfig& cfg,
                                   const KatoConfig& kcfg) {
  if (b.dim != 1)
    throw Unsupported("check_convolution_bound is implemented for d = 1");
  if (beta_prime < 0 || beta < beta_prime)
    throw DomainError("needs beta >= beta' >= 0");
  if (!(s < t)) throw DomainError("needs s < t");
  double K = kato_functional(b, beta, t - s, kcfg).value;
  auto xy = linspace(-1.5, 1.5, cfg.xy_lattice);
  CertReport rep;
  rep.worst_point = {0.0, 0.0};
  auto max_ratio = [&](double scale) {
    double worst = 0;
    for (double x : xy)
      for (double y : xy) {
        double lhs = convolution_lhs(b, beta, beta_prime, lambda, s, t, x,
                                     y, cfg, scale);
        double denom =
            K * rho_radial(lambda, -beta_prime, 1, t - s, std::abs(x - y));
        double ratio = (K < 1e-300) ? (lhs < 1e-300 ? 0.0 : INFINITY)
                                    : lhs / denom;
        if (ratio > worst) {
          worst = ratio;
          rep.worst_point = {x, y};
        }
      }
    return worst;
  };
  double r1 = max_ratio(1.0);
  double r2 = max_ratio(2.0);
  if (r2 > (1 + cfg.divergence_growth) * r1 && r2 > 1e-12) {
    double r4 = max_ratio(4.0);
    if (r4 > (1 + cfg.divergence_growth) * r2)
      throw Divergent("convolution bound quadrature does not stabilize");
    r2 = r4;
  }
  rep.fitted_C = r2;
  rep.lhs_sup = r2 * K;
  rep.rhs = K;
  rep.ratio = r2;
  return rep;
}

}  // namespace mkv
