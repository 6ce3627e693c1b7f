#include "mkvsde/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "mkvsde/reports.hpp"

namespace mkv {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
void put_f64(std::ofstream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
std::uint32_t get_u32(std::ifstream& is) {
  std::uint32_t v;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
double get_f64(std::ifstream& is) {
  double v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_header(std::ofstream& os, std::uint32_t kind,
                  const SpatialGrid& g) {
  os.write("MKVG", 4);
  put_u32(os, kVersion);
  put_u32(os, kind);
  put_u32(os, std::uint32_t(g.dim));
  for (int a = 0; a < g.dim; ++a) put_u32(os, std::uint32_t(g.cells[a]));
  for (int a = 0; a < g.dim; ++a) {
    put_f64(os, g.lo[a]);
    put_f64(os, g.hi[a]);
  }
}

SpatialGrid read_header(std::ifstream& is, std::uint32_t expect_kind) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MKVG", 4) != 0)
    throw IoError("not an MKVG file");
  if (get_u32(is) != kVersion) throw IoError("unsupported MKVG version");
  if (get_u32(is) != expect_kind) throw IoError("unexpected MKVG kind");
  std::uint32_t d = get_u32(is);
  if (d < 1 || d > 2) throw IoError("unsupported dimension");
  std::vector<int> cells(d);
  std::vector<double> lo(d), hi(d);
  for (std::uint32_t a = 0; a < d; ++a) cells[a] = int(get_u32(is));
  for (std::uint32_t a = 0; a < d; ++a) {
    lo[a] = get_f64(is);
    hi[a] = get_f64(is);
  }
  return SpatialGrid::box(lo, hi, cells);
}

}  // namespace

void write_measure_mkvg(const std::string& path, const Measure& m) {
  if (m.repr != Measure::Repr::Grid)
    throw Unsupported("MKVG holds grid measures; rebin atoms first");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path);
  write_header(os, 0, m.grid);
  for (double v : m.values) put_f64(os, v);
  if (!os) throw IoError("short write to " + path);
}

Measure read_measure_mkvg(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  SpatialGrid g = read_header(is, 0);
  std::vector<double> vals(g.ncells());
  for (double& v : vals) v = get_f64(is);
  if (!is) throw IoError("short read from " + path);
  return Measure::grid_density(g, std::move(vals));
}

void write_kernel_mkvg(const std::string& path, const KernelGrid& kg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path);
  write_header(os, 1, kg.ygrid);
  put_f64(os, kg.s);
  put_u32(os, std::uint32_t(kg.nt()));
  for (double t : kg.t_nodes) put_f64(os, t);
  put_u32(os, std::uint32_t(kg.nx()));
  for (double x : kg.x_nodes) put_f64(os, x);
  for (double v : kg.values) put_f64(os, v);
  if (!os) throw IoError("short write to " + path);
}

KernelGrid read_kernel_mkvg(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  KernelGrid kg;
  kg.ygrid = read_header(is, 1);
  kg.dim = kg.ygrid.dim;
  kg.s = get_f64(is);
  std::uint32_t nt = get_u32(is);
  kg.t_nodes.resize(nt);
  for (double& t : kg.t_nodes) t = get_f64(is);
  std::uint32_t nx = get_u32(is);
  kg.x_nodes.resize(std::size_t(nx) * kg.dim);
  for (double& x : kg.x_nodes) x = get_f64(is);
  kg.values.resize(std::size_t(nx) * nt * kg.ygrid.ncells());
  for (double& v : kg.values) v = get_f64(is);
  if (!is) throw IoError("short read from " + path);
  return kg;
}

void measure_to_csv(const std::string& path, const Measure& m) {
  if (m.repr != Measure::Repr::Grid)
    throw Unsupported("CSV export holds grid measures");
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  for (int a = 0; a < m.dim; ++a) os << "x" << a << ",";
  os << "value\n";
  std::vector<double> c(m.dim);
  char buf[64];
  for (std::size_t i = 0; i < m.grid.ncells(); ++i) {
    m.grid.center(i, c.data());
    for (int a = 0; a < m.dim; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g,", c[a]);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", m.values[i]);
    os << buf;
  }
}

void residuals_to_csv(const std::string& path, const FixedPointTrace& trace) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  os << "iter,residual,wallclock_ms\n";
  char buf[96];
  for (std::size_t k = 0; k < trace.residuals.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", k + 1,
                  trace.residuals[k],
                  k < trace.wallclock_ms.size() ? trace.wallclock_ms[k] : 0.0);
    os << buf;
  }
}

void particles_to_csv(const std::string& path, const EmpiricalFlow& flow) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  os << "time,particle_id";
  for (int a = 0; a < flow.dim; ++a) os << ",x" << a;
  os << "\n";
  char buf[64];
  for (std::size_t k = 0; k < flow.times.size(); ++k) {
    std::size_t n = flow.states[k].size() / flow.dim;
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%zu", flow.times[k], i);
      os << buf;
      for (int a = 0; a < flow.dim; ++a) {
        std::snprintf(buf, sizeof buf, ",%.17g",
                      flow.states[k][i * flow.dim + a]);
        os << buf;
      }
      os << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// report JSON (decimal floats at full round-trip precision)
// ---------------------------------------------------------------------------

namespace {

nlohmann::json jnum(double v) { return v; }

}  // namespace

std::string to_json(const KatoReport& r) {
  nlohmann::json j;
  j["beta"] = jnum(r.beta);
  j["T"] = jnum(r.T);
  j["value"] = jnum(r.value);
  j["forward_part"] = jnum(r.forward_part);
  j["backward_part"] = jnum(r.backward_part);
  j["quadrature_cells"] = r.quadrature_cells;
  j["est_error"] = jnum(r.est_error);
  j["base_t"] = jnum(r.base_t);
  j["base_x"] = r.base_x;
  return j.dump();
}

std::string to_json(const CertReport& r) {
  nlohmann::json j;
  j["fitted_C"] = jnum(r.fitted_C);
  j["lambda_lower"] = jnum(r.lambda_lower);
  j["lambda_upper"] = jnum(r.lambda_upper);
  j["lhs_sup"] = jnum(r.lhs_sup);
  j["rhs"] = jnum(r.rhs);
  j["ratio"] = jnum(r.ratio);
  j["worst_t"] = jnum(r.worst_t);
  j["worst_point"] = r.worst_point;
  j["note"] = r.note;
  return j.dump();
}

std::string to_json(const ScalingReport& r) {
  nlohmann::json j;
  j["slope"] = jnum(r.slope);
  j["slope_expected"] = jnum(r.slope_expected);
  j["fitted_C"] = jnum(r.fitted_C);
  j["zero_field"] = r.zero_field;
  j["T_list"] = r.T_list;
  j["K_values"] = r.K_values;
  j["norm_values"] = r.norm_values;
  return j.dump();
}

std::string to_json(const PropertyReport& r) {
  nlohmann::json j;
  j["passed"] = r.passed;
  j["fitted_C"] = jnum(r.fitted_C);
  j["max_violation"] = jnum(r.max_violation);
  j["n_samples"] = r.n_samples;
  j["n_violations"] = r.n_violations;
  j["lhs"] = jnum(r.lhs);
  j["rhs"] = jnum(r.rhs);
  j["note"] = r.note;
  return j.dump();
}

std::string to_json(const GapReport& r) {
  nlohmann::json j;
  j["epsilon_T"] = jnum(r.epsilon_T);
  j["epsilon_half"] = jnum(r.epsilon_half);
  j["contraction_factor"] = jnum(r.contraction_factor);
  j["J0"] = jnum(r.J0);
  j["J1"] = jnum(r.J1);
  j["J2"] = jnum(r.J2);
  j["J3"] = jnum(r.J3);
  j["T"] = jnum(r.T);
  j["s"] = jnum(r.s);
  return j.dump();
}

}  // namespace mkv
