// Command-line front end. All numerical work goes through the C API of the
// shared library (mkvsde/capi.h); this translation unit only parses flags,
// merges parameter overrides and writes run manifests.
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mkvsde/capi.h"

using nlohmann::json;

namespace {

struct Common {
  std::string scenario_path;
  std::string name = "constant";
  std::string params = "{}";
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  double tol = 0;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// stitch CLI overrides into the builder parameter object
json merge_params(const Common& c) {
  json p = json::parse(c.params);
  if (c.seed) p["seed"] = c.seed;
  if (c.tol > 0) p["picard_tol"] = c.tol;
  return p;
}

int fail(const std::string& cmd, int status) {
  json diag;
  diag["command"] = cmd;
  diag["status"] = status;
  diag["error"] = mkv_last_error();
  std::fprintf(stderr, "%s\n", diag.dump(2).c_str());
  return 1;
}

std::string out_root(const Common& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  const char* env = std::getenv("MKV_DATA_DIR");
  return env ? std::string(env) : std::string(".");
}

mkv_scenario* open_scenario(const Common& c, std::string* echo) {
  mkv_scenario* sc = nullptr;
  int rc;
  if (!c.scenario_path.empty()) {
    rc = mkv_scenario_load(c.scenario_path.c_str(), &sc);
  } else {
    rc = mkv_scenario_build(c.name.c_str(), merge_params(c).dump().c_str(),
                            &sc);
  }
  if (rc != MKV_OK) return nullptr;
  if (c.seed) mkv_scenario_set_seed(sc, c.seed);
  char* js = nullptr;
  if (mkv_scenario_to_json(sc, &js) == MKV_OK && js) {
    *echo = js;
    mkv_string_free(js);
  }
  return sc;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::string& scenario_echo, std::uint64_t seed,
                    const std::vector<std::string>& outputs, double wall_ms,
                    const char* report_json) {
  json m;
  m["command"] = command;
  m["scenario_hash"] =
      scenario_echo.empty() ? 0 : fnv1a(scenario_echo);
  m["config"] =
      scenario_echo.empty() ? json(nullptr) : json::parse(scenario_echo);
  m["abi_version"] = mkv_abi_version();
  m["seed"] = seed;
  m["outputs"] = outputs;
  m["wallclock_ms"] = wall_ms;
  if (report_json) m["report"] = json::parse(report_json);
  std::ofstream os(dir + "/manifest.json");
  os << m.dump(2) << "\n";
}

using clock_t_ = std::chrono::steady_clock;

double ms_since(clock_t_::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_t_::now() - t0)
      .count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constructive machinery for distribution-dependent SDEs with "
               "singular drifts: parametrix kernels, Kato-class norms, "
               "measure-flow fixed points and their oracles"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  Common c;
  app.add_option("--scenario", c.scenario_path,
                 "scenario JSON file ({\"name\":..., \"params\":...})");
  app.add_option("--name", c.name, "built-in scenario name");
  app.add_option("--params", c.params, "builder parameter JSON object");
  app.add_option("--out", c.out_dir, "output directory (or MKV_DATA_DIR)");
  app.add_option("--seed", c.seed, "RNG seed override");
  app.add_option("--threads", c.threads, "worker thread cap");
  app.add_option("--tol", c.tol, "fixed-point tolerance override");

  auto* cmd_scen = app.add_subcommand("scenarios", "list built-in scenarios");
  auto* cmd_kernel =
      app.add_subcommand("kernel", "build the frozen-coefficient heat kernel");
  std::string kernel_out = "kernel.mkvg";
  cmd_kernel->add_option("--kernel-out", kernel_out, "MKVG output path");
  auto* cmd_fix =
      app.add_subcommand("fixpoint", "damped Picard iteration to a psi fixed point");
  auto* cmd_part = app.add_subcommand("particles", "interacting-particle oracle");
  std::uint64_t n_particles = 10000;
  double pdt = 1e-2;
  cmd_part->add_option("--n", n_particles, "particle count");
  cmd_part->add_option("--dt", pdt, "Euler-Maruyama step");
  auto* cmd_nfpe =
      app.add_subcommand("nfpe", "nonlinear Fokker-Planck finite-volume solve");
  double fdt = 1e-3;
  int cells = 0;
  std::string nfpe_out = "nfpe.mkvg";
  cmd_nfpe->add_option("--dt", fdt, "time step");
  cmd_nfpe->add_option("--cells", cells, "grid cells override");
  cmd_nfpe->add_option("--out-file", nfpe_out, "MKVG output path");
  auto* cmd_norms =
      app.add_subcommand("norms", "Kato functional and localized norm of a test field");
  std::string field = "one";
  double beta = 1.0, np = 4.0, nq = -1.0, nT = 1.0;
  cmd_norms->add_option("--field", field, "one | indicator | power:<g>");
  cmd_norms->add_option("--beta", beta, "Kato order");
  cmd_norms->add_option("-p", np, "spatial exponent (<=0 for infinity)");
  cmd_norms->add_option("-q", nq, "time exponent (<=0 for infinity)");
  cmd_norms->add_option("-T", nT, "horizon");
  auto* cmd_verify = app.add_subcommand("verify", "run a verification suite");
  std::string suite = "trivial";
  cmd_verify->add_option("--suite", suite, "trivial | standard | full");
  auto* cmd_ex3 =
      app.add_subcommand("example3", "exact nonuniqueness construction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (c.threads > 0) mkv_set_threads(c.threads);
  auto t0 = clock_t_::now();

  try {
    if (cmd_scen->parsed()) {
      char* js = nullptr;
      if (mkv_scenario_list_json(&js) != MKV_OK) return fail("scenarios", 1);
      std::printf("%s\n", js);
      mkv_string_free(js);
      return 0;
    }

    const std::string root = out_root(c);
    std::string echo;
    char* report = nullptr;

    if (cmd_kernel->parsed()) {
      mkv_scenario* sc = open_scenario(c, &echo);
      if (!sc) return fail("kernel", 1);
      std::string path = root + "/" + kernel_out;
      int rc = mkv_run_kernel(sc, path.c_str(), &report);
      mkv_scenario_free(sc);
      if (rc != MKV_OK) return fail("kernel", rc);
      std::printf("%s\n", report);
      write_manifest(root, "kernel", echo, c.seed, {path}, ms_since(t0),
                     report);
      mkv_string_free(report);
      return 0;
    }
    if (cmd_fix->parsed()) {
      mkv_scenario* sc = open_scenario(c, &echo);
      if (!sc) return fail("fixpoint", 1);
      int rc = mkv_run_fixpoint(sc, root.c_str(), &report);
      mkv_scenario_free(sc);
      if (rc != MKV_OK) return fail("fixpoint", rc);
      std::printf("%s\n", report);
      write_manifest(root, "fixpoint", echo, c.seed,
                     {root + "/residuals.csv"}, ms_since(t0), report);
      mkv_string_free(report);
      return 0;
    }
    if (cmd_part->parsed()) {
      mkv_scenario* sc = open_scenario(c, &echo);
      if (!sc) return fail("particles", 1);
      std::string path = root + "/particles.csv";
      int rc = mkv_run_particles(sc, n_particles, pdt, c.seed, path.c_str(),
                                 &report);
      mkv_scenario_free(sc);
      if (rc != MKV_OK) return fail("particles", rc);
      std::printf("%s\n", report);
      write_manifest(root, "particles", echo, c.seed, {path}, ms_since(t0),
                     report);
      mkv_string_free(report);
      return 0;
    }
    if (cmd_nfpe->parsed()) {
      Common cc = c;
      if (cells > 0) {
        json p = json::parse(cc.params);
        p["cells"] = cells;
        cc.params = p.dump();
      }
      mkv_scenario* sc = open_scenario(cc, &echo);
      if (!sc) return fail("nfpe", 1);
      std::string path = root + "/" + nfpe_out;
      int rc = mkv_run_nfpe(sc, fdt, path.c_str(), &report);
      mkv_scenario_free(sc);
      if (rc != MKV_OK) return fail("nfpe", rc);
      std::printf("%s\n", report);
      write_manifest(root, "nfpe", echo, c.seed, {path}, ms_since(t0),
                     report);
      mkv_string_free(report);
      return 0;
    }
    if (cmd_norms->parsed()) {
      double pv = np <= 0 ? INFINITY : np;
      double qv = nq <= 0 ? INFINITY : nq;
      int rc = mkv_field_norms(field.c_str(), beta, pv, qv, nT, &report);
      if (rc != MKV_OK) return fail("norms", rc);
      std::printf("%s\n", report);
      write_manifest(root, "norms", "", c.seed, {}, ms_since(t0), report);
      mkv_string_free(report);
      return 0;
    }
    if (cmd_verify->parsed()) {
      int rc = mkv_run_verify(suite.c_str(), &report);
      if (report) {
        std::ofstream os(root + "/verify_" + suite + ".json");
        os << report << "\n";
        write_manifest(root, "verify", "", c.seed,
                       {root + "/verify_" + suite + ".json"}, ms_since(t0),
                       report);
        mkv_string_free(report);
      }
      if (rc == MKV_ERR_VERIFICATION_FAILED) return 1;
      if (rc != MKV_OK) return fail("verify", rc);
      return 0;
    }
    if (cmd_ex3->parsed()) {
      int rc = mkv_run_example3(&report);
      if (report) {
        std::printf("%s\n", report);
        write_manifest(root, "example3", "", c.seed, {}, ms_since(t0),
                       report);
        mkv_string_free(report);
      }
      if (rc == MKV_ERR_VERIFICATION_FAILED) return 1;
      if (rc != MKV_OK) return fail("example3", rc);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "{\"error\": \"%s\"}\n", e.what());
    return 1;
  }
  return 2;
}
