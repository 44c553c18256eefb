#pragma once

#include <string>

namespace amr {

// Two-axis machine with non-reheat turbine, first-order governor and
// IEEE type 1 exciter. Reactances and gains in p.u. on system base, time
// constants in seconds.
struct GeneratorParams {
  double h = 0.0;       // inertia constant
  double d = 0.0;       // damping, multiplies (omega - 1)
  double xd = 0.0;
  double xq = 0.0;
  double xd_p = 0.0;
  double xq_p = 0.0;
  double ra = 0.0;
  double tdo_p = 0.0;
  double tqo_p = 0.0;
  double tch = 0.0;     // turbine charging time
  double tgv = 0.0;     // governor time constant
  double r_gov = 0.0;   // speed regulation
  double ka = 0.0;
  double ta = 0.0;
  double kf = 0.0;
  double tf = 0.0;
  double ke = 0.0;
  double te = 0.0;
  double ae = 0.0;      // exciter saturation coefficient A_E
  double be = 0.0;      // exciter saturation exponent B_E

  bool operator==(const GeneratorParams&) const = default;
};

/// Throws ValidationError naming `who` and the violated bound.
void validate(const GeneratorParams& p, const std::string& who);

}  // namespace amr
