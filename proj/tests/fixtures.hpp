#pragma once

#include <string>

#include "pdmp/config.hpp"

namespace fixtures {

using namespace pdmp;

inline OperonBundle gene(int d, double rate2 = 2.0, double lam = 1.0, double eps = 0.05) {
  OperonModel m;
  m.rates = Vec::Ones(d);
  if (d > 1) m.rates[1] = rate2;
  m.burst_upper = Vec::Ones(d);
  m.jump_rate = lam;
  m.perturbation = {PerturbationKind::box, eps, eps};
  return build_operon_spec(m);
}

// Two regimes with different centres, a halving jump and a sticky switch.
inline const char* kSwitchingConfig = R"(
[model]
kind = switching-linear
dim = 2
regimes = 2
jump_rate = 1
rates_1 = 1
rates_2 = 1
center_1 = 1, 0
center_2 = -1, 0
jump_scale = 0.5
burst_upper = 1
perturbation = ball
eps = 0.05

[switching]
row_1 = 0.3, 0.7
row_2 = 0.6, 0.4
)";

inline LoadedConfig switching() { return parse_config(kSwitchingConfig, "switching"); }

}  // namespace fixtures
