#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "mkvsde/io.hpp"
#include "mkvsde/parametrix.hpp"
#include "mkvsde/rng.hpp"

using namespace mkv;

TEST_CASE("measure mkvg round trip is bit exact") {
  auto g = SpatialGrid::box1d(-3, 5, 64);
  CounterRng rng{4};
  std::vector<double> vals(64);
  for (int i = 0; i < 64; ++i) vals[i] = rng.uniform(i) - 0.25;
  auto m = Measure::grid_density(g, vals);
  const char* path = "/tmp/mkv_test_measure.mkvg";
  write_measure_mkvg(path, m);
  auto back = read_measure_mkvg(path);
  CHECK(back.grid.same_as(g));
  CHECK(back.values == m.values);
  std::remove(path);
}

TEST_CASE("kernel mkvg round trip") {
  CoefficientField c;
  c.dim = 1;
  c.a_eval = [](double, std::span<const double>, double* o) { o[0] = 0.5; };
  c.a_constant_in_x = true;
  KernelRequest rq;
  rq.s = 0.25;
  rq.t_nodes = {0.5, 0.75, 1.0};
  rq.x_nodes = {-0.5, 0.0, 0.5};
  rq.ygrid = SpatialGrid::box1d(-4, 4, 32);
  auto kg = heat_kernel(c, rq);
  const char* path = "/tmp/mkv_test_kernel.mkvg";
  write_kernel_mkvg(path, kg);
  auto back = read_kernel_mkvg(path);
  CHECK(back.s == kg.s);
  CHECK(back.t_nodes == kg.t_nodes);
  CHECK(back.x_nodes == kg.x_nodes);
  CHECK(back.values == kg.values);
  std::remove(path);
}

TEST_CASE("csv export") {
  auto g = SpatialGrid::box1d(0, 1, 4);
  auto m = Measure::grid_density(g, {1.0, 2.0, 3.0, 4.0});
  const char* path = "/tmp/mkv_test_measure.csv";
  measure_to_csv(path, m);
  std::ifstream is(path);
  std::string header, row;
  std::getline(is, header);
  CHECK(header == "x0,value");
  std::getline(is, row);
  CHECK(row == "0.125,1");
  std::remove(path);
}

TEST_CASE("bad files are rejected") {
  const char* path = "/tmp/mkv_test_bad.mkvg";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE this is not a kernel";
  }
  CHECK_THROWS_AS(read_measure_mkvg(path), IoError);
  CHECK_THROWS_AS(read_measure_mkvg("/tmp/does_not_exist.mkvg"), IoError);
  std::remove(path);
}
