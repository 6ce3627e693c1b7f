#pragma once

#include <string>
#include <vector>

namespace mkv::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0;   // measured quantity
  double bound = 0;   // the pinned tolerance it is held against
  std::string detail;
  double seconds = 0;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckResult> checks;
  bool all_passed = false;
  double seconds = 0;

  std::string to_json() const;
};

// Tiers: "trivial" is a fast smoke set of exactly-known values; "standard"
// runs the twelve acceptance criteria at their pinned tolerances; "full" adds
// the slower cross-checks. Prints one PASS/FAIL line per check to stdout.
SuiteResult run_suite(const std::string& suite);

}  // namespace mkv::verify
