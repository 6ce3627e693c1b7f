#pragma once

#include <string>

#include "mkvsde/measure.hpp"
#include "mkvsde/mkv.hpp"
#include "mkvsde/parametrix.hpp"
#include "mkvsde/particles.hpp"

namespace mkv {

// MKVG binary container (little-endian):
//   magic "MKVG" | u32 version=1 | u32 kind (0 grid measure, 1 kernel)
//   u32 d | u32 cells per axis | f64 lo, f64 hi per axis
//   kernels add: f64 s | u32 nt | f64 t_nodes[nt] | u32 nx | f64 x_nodes[nx*d]
//   then row-major f64 values.
void write_measure_mkvg(const std::string& path, const Measure& m);
Measure read_measure_mkvg(const std::string& path);
void write_kernel_mkvg(const std::string& path, const KernelGrid& kg);
KernelGrid read_kernel_mkvg(const std::string& path);

// CSV exports
void measure_to_csv(const std::string& path, const Measure& m);
void residuals_to_csv(const std::string& path, const FixedPointTrace& trace);
void particles_to_csv(const std::string& path, const EmpiricalFlow& flow);

}  // namespace mkv
