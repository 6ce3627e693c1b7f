// Acceptance suite: runs every criterion at its pinned tolerance and prints
// one PASS/FAIL line per criterion. Exit status reflects the overall result.
#include <cstdio>

#include "mkvsde/verify.hpp"

int main() {
  auto res = mkv::verify::run_suite("standard");
  std::printf("%s: %zu checks, %s (%.1fs total)\n", res.suite.c_str(),
              res.checks.size(), res.all_passed ? "ALL PASSED" : "FAILURES",
              res.seconds);
  return res.all_passed ? 0 : 1;
}
