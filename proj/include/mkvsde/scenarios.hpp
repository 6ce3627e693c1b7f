#pragma once

#include <string>
#include <vector>

#include "mkvsde/mkv.hpp"

namespace mkv {

struct ScenarioInfo {
  std::string name;
  std::string doc;  // which worked example, which assumptions hold
};

std::vector<ScenarioInfo> scenario_list();

// Builds a pinned scenario. params_json is a JSON object; unknown names raise
// UnknownScenario, out-of-range parameters raise ParamOutOfRange. Common
// override keys: time_nodes, cells, box_halfwidth, seed, picard_*, series_*.
ScenarioConfig build_scenario(const std::string& name,
                              const std::string& params_json = "{}");

// serialize a scenario back to {"name":..., "params": {...}} (round-trips
// through build_scenario)
std::string scenario_to_json(const ScenarioConfig& sc);
ScenarioConfig scenario_from_json(const std::string& json_text);

// Exact nonuniqueness constants, evaluated from the error function at call
// time: c1 = P(|N(0,1)| <= 2), c2 = P(|N(0,4)| <= 2), and (lambda1, lambda2)
// solving c1 l1 + (1-c1) l2 = 1, c2 l1 + (1-c2) l2 = 2.
struct Example3Constants {
  double c1, c2, lambda1, lambda2;
};
Example3Constants example3_constants();

// N(0, var(t)) flows on the scenario grid, used as the two Example 3 fixed
// point candidates ([W_t] and [2 W_t])
MeasureFlow gaussian_flow(const ScenarioConfig& sc, double var_rate);

}  // namespace mkv
