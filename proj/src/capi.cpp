#include "mkvsde/capi.h"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mkvsde/fokker_planck.hpp"
#include "mkvsde/io.hpp"
#include "mkvsde/kato.hpp"
#include "mkvsde/mkv.hpp"
#include "mkvsde/particles.hpp"
#include "mkvsde/scenarios.hpp"
#include "mkvsde/verify.hpp"

using nlohmann::json;

struct mkv_scenario {
  mkv::ScenarioConfig cfg;
};

namespace {

thread_local std::string g_last_error;

int status_of(const mkv::error& e) {
  using mkv::errc;
  switch (e.code()) {
    case errc::invalid_measure: return MKV_ERR_INVALID_MEASURE;
    case errc::grid_mismatch: return MKV_ERR_GRID_MISMATCH;
    case errc::not_probability: return MKV_ERR_NOT_PROBABILITY;
    case errc::mass_loss: return MKV_ERR_MASS_LOSS;
    case errc::domain_error: return MKV_ERR_DOMAIN;
    case errc::divergent: return MKV_ERR_DIVERGENT;
    case errc::index_set_error: return MKV_ERR_INDEX_SET;
    case errc::ellipticity_error: return MKV_ERR_ELLIPTICITY;
    case errc::non_integrable_singularity: return MKV_ERR_NON_INTEGRABLE;
    case errc::series_diverging: return MKV_ERR_SERIES_DIVERGING;
    case errc::no_envelope: return MKV_ERR_NO_ENVELOPE;
    case errc::assumption_violation: return MKV_ERR_ASSUMPTION;
    case errc::missing_derivative: return MKV_ERR_MISSING_DERIVATIVE;
    case errc::particle_blowup: return MKV_ERR_PARTICLE_BLOWUP;
    case errc::cfl_violation: return MKV_ERR_CFL;
    case errc::non_finite_state: return MKV_ERR_NON_FINITE;
    case errc::unknown_scenario: return MKV_ERR_UNKNOWN_SCENARIO;
    case errc::param_out_of_range: return MKV_ERR_PARAM;
    case errc::unsupported: return MKV_ERR_UNSUPPORTED;
    case errc::io_error: return MKV_ERR_IO;
    default: return MKV_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const mkv::error& e) {
    g_last_error = std::string(mkv::errc_name(e.code())) + ": " + e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MKV_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return MKV_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

unsigned mkv_abi_version(void) { return 1; }

const char* mkv_last_error(void) { return g_last_error.c_str(); }

void mkv_string_free(char* s) { std::free(s); }

int mkv_set_threads(int n) {
  mkv::set_max_threads(n > 0 ? n : 0);
  return MKV_OK;
}

int mkv_scenario_build(const char* name, const char* params_json,
                       mkv_scenario** out) {
  if (!name || !out) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  return guarded([&] {
    auto sc = mkv::build_scenario(name, params_json ? params_json : "{}");
    *out = new mkv_scenario{std::move(sc)};
    return MKV_OK;
  });
}

int mkv_scenario_load(const char* path, mkv_scenario** out) {
  if (!path || !out) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  return guarded([&] {
    std::ifstream is(path);
    if (!is) throw mkv::IoError(std::string("cannot open ") + path);
    std::stringstream ss;
    ss << is.rdbuf();
    auto sc = mkv::scenario_from_json(ss.str());
    *out = new mkv_scenario{std::move(sc)};
    return MKV_OK;
  });
}

int mkv_scenario_to_json(const mkv_scenario* sc, char** json_out) {
  if (!sc || !json_out) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  return guarded([&] {
    *json_out = dup_string(mkv::scenario_to_json(sc->cfg));
    return MKV_OK;
  });
}

int mkv_scenario_list_json(char** json_out) {
  if (!json_out) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  return guarded([&] {
    json arr = json::array();
    for (const auto& e : mkv::scenario_list()) {
      json j;
      j["name"] = e.name;
      j["doc"] = e.doc;
      arr.push_back(j);
    }
    *json_out = dup_string(arr.dump(2));
    return MKV_OK;
  });
}

void mkv_scenario_free(mkv_scenario* sc) { delete sc; }

int mkv_scenario_set_seed(mkv_scenario* sc, uint64_t seed) {
  if (!sc) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  sc->cfg.seed = seed;
  return MKV_OK;
}

int mkv_run_kernel(const mkv_scenario* sc, const char* kernel_out_path,
                   char** report_json) {
  if (!sc) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  return guarded([&] {
    auto flow = mkv::constant_initial_flow(sc->cfg);
    auto field = mkv::freeze(sc->cfg.coeffs, flow);
    mkv::validate_coefficients(field, sc->cfg.space, 3);
    mkv::KernelRequest rq;
    rq.s = 0;
    rq.t_nodes = sc->cfg.time_grid;
    rq.ygrid = mkv::coarsen_grid(sc->cfg.space,
                                 sc->cfg.series.max_kernel_cells);
    rq.x_nodes = mkv::linspace(-2.0, 2.0, 17);
    auto kg = mkv::heat_kernel(field, rq, sc->cfg.series);
    if (kernel_out_path) mkv::write_kernel_mkvg(kernel_out_path, kg);
    json j;
    j["mass_defect_max"] = kg.mass_defect_max;
    j["term_ratio"] = kg.term_ratio;
    j["tail_estimate"] = kg.tail_estimate;
    j["max_clip"] = kg.max_clip;
    j["windows_used"] = kg.windows_used;
    j["term_sup"] = kg.term_sup;
    if (report_json) *report_json = dup_string(j.dump(2));
    return MKV_OK;
  });
}

int mkv_run_fixpoint(const mkv_scenario* sc, const char* out_dir,
                     char** report_json) {
  if (!sc) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  return guarded([&] {
    auto trace = mkv::picard_iterate(sc->cfg);
    if (out_dir) {
      std::string dir(out_dir);
      mkv::residuals_to_csv(dir + "/residuals.csv", trace);
      for (std::size_t k = 0; k < trace.final_flow.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "/flow_t%03zu.mkvg", k);
        mkv::write_measure_mkvg(dir + name, trace.final_flow.at(k));
      }
    }
    json j;
    j["converged"] = trace.converged;
    j["iterations"] = trace.residuals.size();
    j["residuals"] = trace.residuals;
    if (report_json) *report_json = dup_string(j.dump(2));
    return MKV_OK;
  });
}

int mkv_run_particles(const mkv_scenario* sc, uint64_t n_particles, double dt,
                      uint64_t seed, const char* csv_out, char** report_json) {
  if (!sc) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  return guarded([&] {
    mkv::ParticleSystemConfig pc;
    pc.N = n_particles ? n_particles : 10000;
    pc.dt = dt > 0 ? dt : 1e-2;
    pc.seed = seed;
    if (sc->cfg.coeffs.drift_singular)
      pc.eps_moll = 2.0 * sc->cfg.space.cell_width(0);
    auto flow = mkv::simulate(sc->cfg, pc);
    if (csv_out) mkv::particles_to_csv(csv_out, flow);
    auto grid = mkv::coarsen_grid(sc->cfg.space, 256);
    auto mf = mkv::empirical_to_measure(flow, grid);
    json j;
    j["times"] = flow.times;
    std::vector<double> means, vars;
    for (std::size_t k = 0; k < mf.size(); ++k) {
      double m1 = mf.at(k).integrate(
          [](std::span<const double> x) { return x[0]; });
      double m2 = mf.at(k).integrate(
          [](std::span<const double> x) { return x[0] * x[0]; });
      means.push_back(m1);
      vars.push_back(m2 - m1 * m1);
    }
    j["mean"] = means;
    j["variance"] = vars;
    if (report_json) *report_json = dup_string(j.dump(2));
    return MKV_OK;
  });
}

int mkv_run_nfpe(const mkv_scenario* sc, double dt, const char* out_path,
                 char** report_json) {
  if (!sc) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  return guarded([&] {
    mkv::NfpeOptions opt;
    if (dt > 0) opt.dt = dt;
    auto flow = mkv::solve_nfpe(sc->cfg, opt);
    if (out_path) mkv::write_measure_mkvg(out_path, flow.at(flow.size() - 1));
    auto nc = mkv::narrow_continuity_check(flow);
    json j;
    j["times"] = flow.times;
    std::vector<double> masses;
    for (std::size_t k = 0; k < flow.size(); ++k)
      masses.push_back(flow.at(k).total_mass());
    j["masses"] = masses;
    j["narrow_continuity_max_jump"] = nc.max_violation;
    if (report_json) *report_json = dup_string(j.dump(2));
    return MKV_OK;
  });
}

int mkv_field_norms(const char* field, double beta, double p, double q,
                    double T, char** report_json) {
  if (!field) {
    g_last_error = "null argument";
    return MKV_ERR_PARAM;
  }
  return guarded([&] {
    std::string name(field);
    mkv::SpaceTimeField f;
    if (name == "one") {
      f = mkv::SpaceTimeField::constant(1, 1.0);
    } else if (name == "indicator") {
      f = mkv::SpaceTimeField::indicator_ball(1, 1.0);
    } else if (name.rfind("power:", 0) == 0) {
      double g = std::stod(name.substr(6));
      f = mkv::SpaceTimeField::power_singularity(1, g, 1.0);
    } else {
      throw mkv::ParamOutOfRange("unknown field '" + name + "'");
    }
    auto kr = mkv::kato_functional(f, beta, T);
    json j;
    j["kato"] = json::parse(mkv::to_json(kr));
    try {
      j["lpq_norm"] = mkv::lpq_norm(f, p, q, T);
    } catch (const mkv::Divergent& e) {
      j["lpq_norm"] = nullptr;
      j["lpq_divergent"] = true;
    }
    if (report_json) *report_json = dup_string(j.dump(2));
    return MKV_OK;
  });
}

int mkv_run_example3(char** report_json) {
  return guarded([&] {
    auto k = mkv::example3_constants();
    auto sc = mkv::build_scenario("example3");
    auto W = mkv::gaussian_flow(sc, 1.0);
    auto W2 = mkv::gaussian_flow(sc, 4.0);
    double rW = mkv::dphi_metric(mkv::psi(sc, W), W, sc.phi);
    double rW2 = mkv::dphi_metric(mkv::psi(sc, W2), W2, sc.phi);
    double sep = mkv::dphi_metric(W, W2, sc.phi);
    json j;
    j["c1"] = k.c1;
    j["c2"] = k.c2;
    j["lambda1"] = k.lambda1;
    j["lambda2"] = k.lambda2;
    j["residual_W"] = rW;
    j["residual_2W"] = rW2;
    j["dphi_separation"] = sep;
    bool ok = rW <= 1e-3 && rW2 <= 1e-3 && sep >= 0.1;
    j["passed"] = ok;
    if (report_json) *report_json = dup_string(j.dump(2));
    if (!ok) {
      g_last_error = "example3 fixed-point residuals or separation out of bounds";
      return int(MKV_ERR_VERIFICATION_FAILED);
    }
    return int(MKV_OK);
  });
}

int mkv_run_verify(const char* suite, char** report_json) {
  return guarded([&] {
    auto res = mkv::verify::run_suite(suite ? suite : "trivial");
    if (report_json) *report_json = dup_string(res.to_json());
    if (!res.all_passed) {
      g_last_error = "verification suite reported failures";
      return int(MKV_ERR_VERIFICATION_FAILED);
    }
    return int(MKV_OK);
  });
}

}  // extern "C"
