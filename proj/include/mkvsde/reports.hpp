#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mkv {

struct KatoReport {
  double beta = 0;
  double T = 0;
  double value = 0;
  double forward_part = 0;
  double backward_part = 0;
  std::size_t quadrature_cells = 0;
  double est_error = 0;
  double base_t = 0;            // argmax base point
  std::vector<double> base_x;
};

struct CertReport {
  double fitted_C = 0;
  double lambda_lower = 0;  // lower-envelope decay rate
  double lambda_upper = 0;  // upper-envelope decay rate
  double lhs_sup = 0;
  double rhs = 0;
  double ratio = 0;
  double worst_t = 0;
  std::vector<double> worst_point;
  std::string note;
};

struct ScalingReport {
  double slope = 0;
  double slope_expected = 0;
  double fitted_C = 0;
  bool zero_field = false;
  std::vector<double> T_list;
  std::vector<double> K_values;
  std::vector<double> norm_values;
};

struct PropertyReport {
  bool passed = false;
  double fitted_C = 0;
  double max_violation = 0;
  std::size_t n_samples = 0;
  std::size_t n_violations = 0;
  double lhs = 0;
  double rhs = 0;
  std::string note;
};

struct GapReport {
  double epsilon_T = 0;
  double epsilon_half = 0;       // restricted to the first half window
  double contraction_factor = 0; // epsilon_T / epsilon_half
  double J0 = 0, J1 = 0, J2 = 0, J3 = 0;
  double T = 0;
  double s = 0;
};

// JSON encodings live in io.cpp (report_to_json).
std::string to_json(const KatoReport& r);
std::string to_json(const CertReport& r);
std::string to_json(const ScalingReport& r);
std::string to_json(const PropertyReport& r);
std::string to_json(const GapReport& r);

}  // namespace mkv
