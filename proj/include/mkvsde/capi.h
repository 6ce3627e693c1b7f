/* C API of the mkvsde shared library: opaque handles plus integer status
 * codes. Every function returns MKV_OK (0) on success; on failure it returns
 * a nonzero code and mkv_last_error() carries a message for the calling
 * thread. Strings returned through char** are heap-allocated and must be
 * released with mkv_string_free(). */
#ifndef MKVSDE_CAPI_H
#define MKVSDE_CAPI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct mkv_scenario mkv_scenario;

enum mkv_status {
  MKV_OK = 0,
  MKV_ERR_INVALID_MEASURE = 1,
  MKV_ERR_GRID_MISMATCH = 2,
  MKV_ERR_NOT_PROBABILITY = 3,
  MKV_ERR_MASS_LOSS = 4,
  MKV_ERR_DOMAIN = 5,
  MKV_ERR_DIVERGENT = 6,
  MKV_ERR_INDEX_SET = 7,
  MKV_ERR_ELLIPTICITY = 8,
  MKV_ERR_NON_INTEGRABLE = 9,
  MKV_ERR_SERIES_DIVERGING = 10,
  MKV_ERR_NO_ENVELOPE = 11,
  MKV_ERR_ASSUMPTION = 12,
  MKV_ERR_MISSING_DERIVATIVE = 13,
  MKV_ERR_PARTICLE_BLOWUP = 14,
  MKV_ERR_CFL = 15,
  MKV_ERR_NON_FINITE = 16,
  MKV_ERR_UNKNOWN_SCENARIO = 17,
  MKV_ERR_PARAM = 18,
  MKV_ERR_UNSUPPORTED = 19,
  MKV_ERR_IO = 20,
  MKV_ERR_VERIFICATION_FAILED = 100,
  MKV_ERR_INTERNAL = 127
};

unsigned mkv_abi_version(void);
/* thread-local message for the most recent failure in this thread */
const char* mkv_last_error(void);
void mkv_string_free(char* s);
/* worker cap for data-parallel loops; n <= 0 restores hardware default */
int mkv_set_threads(int n);

/* scenarios ---------------------------------------------------------- */
int mkv_scenario_build(const char* name, const char* params_json,
                       mkv_scenario** out);
/* file holds {"name": ..., "params": {...}} */
int mkv_scenario_load(const char* path, mkv_scenario** out);
int mkv_scenario_to_json(const mkv_scenario* sc, char** json_out);
int mkv_scenario_list_json(char** json_out);
void mkv_scenario_free(mkv_scenario* sc);
int mkv_scenario_set_seed(mkv_scenario* sc, uint64_t seed);

/* runs ---------------------------------------------------------------- */
/* heat kernel of the coefficients frozen along the constant initial flow;
 * writes the MKVG container and returns a diagnostics report */
int mkv_run_kernel(const mkv_scenario* sc, const char* kernel_out_path,
                   char** report_json);
/* damped Picard iteration to a fixed point of psi; writes residuals CSV and
 * the final flow slices (MKVG) under out_dir when non-NULL */
int mkv_run_fixpoint(const mkv_scenario* sc, const char* out_dir,
                     char** report_json);
/* interacting-particle oracle; writes a snapshot CSV when csv_out non-NULL */
int mkv_run_particles(const mkv_scenario* sc, uint64_t n_particles, double dt,
                      uint64_t seed, const char* csv_out, char** report_json);
/* nonlinear Fokker-Planck solve; writes the final slice (MKVG) when out_path
 * non-NULL */
int mkv_run_nfpe(const mkv_scenario* sc, double dt, const char* out_path,
                 char** report_json);
/* Kato functional and localized norm of a named test field:
 * "one" | "indicator" | "power:<exponent>" */
int mkv_field_norms(const char* field, double beta, double p, double q,
                    double T, char** report_json);
/* exact nonuniqueness construction: constants, both fixed-point residuals
 * and the separation; fails with MKV_ERR_VERIFICATION_FAILED if the
 * residuals or the separation miss their bounds */
int mkv_run_example3(char** report_json);
/* verification tiers: "trivial" | "standard" | "full"; returns
 * MKV_ERR_VERIFICATION_FAILED when a check fails */
int mkv_run_verify(const char* suite, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* MKVSDE_CAPI_H */
