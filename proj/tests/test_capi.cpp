// Exercises the extern-C surface the CLI links against.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstring>
#include <string>

#include "doctest.h"
#include "mkvsde/capi.h"

TEST_CASE("scenario lifecycle and json round trip") {
  CHECK(mkv_abi_version() == 1);
  mkv_scenario* sc = nullptr;
  CHECK(mkv_scenario_build("example1", "{\"b_amp\": 0.3}", &sc) == MKV_OK);
  REQUIRE(sc != nullptr);
  CHECK(mkv_scenario_set_seed(sc, 99) == MKV_OK);
  char* js = nullptr;
  CHECK(mkv_scenario_to_json(sc, &js) == MKV_OK);
  REQUIRE(js != nullptr);
  CHECK(std::string(js).find("example1") != std::string::npos);
  // reload through a file
  const char* path = "/tmp/mkv_capi_scenario.json";
  {
    FILE* f = fopen(path, "w");
    fputs(js, f);
    fclose(f);
  }
  mkv_string_free(js);
  mkv_scenario* sc2 = nullptr;
  CHECK(mkv_scenario_load(path, &sc2) == MKV_OK);
  std::remove(path);
  mkv_scenario_free(sc2);
  mkv_scenario_free(sc);
}

TEST_CASE("error paths set codes and messages") {
  mkv_scenario* sc = nullptr;
  CHECK(mkv_scenario_build("not-a-scenario", "{}", &sc) ==
        MKV_ERR_UNKNOWN_SCENARIO);
  CHECK(std::strlen(mkv_last_error()) > 0);
  CHECK(mkv_scenario_build("example4", "{\"kappa\": 3.0}", &sc) ==
        MKV_ERR_PARAM);
  CHECK(mkv_scenario_load("/tmp/definitely_missing.json", &sc) == MKV_ERR_IO);
  char* js = nullptr;
  CHECK(mkv_run_verify("bogus-suite", &js) == MKV_ERR_PARAM);
}

TEST_CASE("scenario list") {
  char* js = nullptr;
  CHECK(mkv_scenario_list_json(&js) == MKV_OK);
  std::string s(js);
  mkv_string_free(js);
  CHECK(s.find("example3") != std::string::npos);
  CHECK(s.find("example4") != std::string::npos);
}

TEST_CASE("kernel run writes a container and a report") {
  mkv_scenario* sc = nullptr;
  REQUIRE(mkv_scenario_build("constant", "{\"time_nodes\": 8, \"cells\": 128}",
                             &sc) == MKV_OK);
  char* report = nullptr;
  const char* path = "/tmp/mkv_capi_kernel.mkvg";
  CHECK(mkv_run_kernel(sc, path, &report) == MKV_OK);
  REQUIRE(report != nullptr);
  std::string rep(report);
  mkv_string_free(report);
  CHECK(rep.find("mass_defect_max") != std::string::npos);
  FILE* f = fopen(path, "rb");
  REQUIRE(f != nullptr);
  char magic[4];
  CHECK(fread(magic, 1, 4, f) == 4);
  CHECK(std::memcmp(magic, "MKVG", 4) == 0);
  fclose(f);
  std::remove(path);
  mkv_scenario_free(sc);
}

TEST_CASE("field norms through the C surface") {
  char* report = nullptr;
  CHECK(mkv_field_norms("one", 1.0, INFINITY, INFINITY, 0.25, &report) ==
        MKV_OK);
  std::string rep(report);
  mkv_string_free(report);
  // K^1 of the constant field at T = 0.25 is 8 sqrt(T) = 4
  CHECK(rep.find("\"value\"") != std::string::npos);
  CHECK(mkv_field_norms("mystery", 1, 2, 2, 1, &report) == MKV_ERR_PARAM);
}

TEST_CASE("trivial verify suite via C surface") {
  char* report = nullptr;
  int rc = mkv_run_verify("trivial", &report);
  REQUIRE(report != nullptr);
  std::string rep(report);
  mkv_string_free(report);
  CHECK(rc == MKV_OK);
  CHECK(rep.find("\"all_passed\": true") != std::string::npos);
}
