#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace amr {

enum class Mode { kFull, kHybrid, kLinear };

std::string to_string(Mode m);
/// "FULL", "HYBRID" or "LINEAR"; throws ValidationError otherwise.
Mode parse_mode(std::string_view s);

struct SwitchState {
  Mode mode = Mode::kLinear;
  double delta_max = 0.0;  // rad
  double t_th = 0.0;       // s spent above delta_max since the last reset
  double t_th_max = 1.0;   // s
  int reference_gen = -1;
};

struct SwitchDecision {
  SwitchState state;
  bool relinearize = false;
};

/// One step of the switching rule: FULL while the fault is on; otherwise
/// HYBRID (accumulating t_th) when delta_dev exceeds delta_max, else LINEAR
/// with t_th reset. Requests re-linearization once t_th > t_th_max; the
/// caller resets t_th after acting on it.
SwitchDecision switch_mode(const SwitchState& sw, bool fault_active,
                           double delta_dev, double h);

/// Generator id with the smallest column norm; ties go to the lowest id.
int reference_generator(const Eigen::VectorXd& norms,
                        const std::vector<int>& gen_order);

}  // namespace amr
