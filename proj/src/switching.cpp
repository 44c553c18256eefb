#include "amr/switching.hpp"

#include "amr/errors.hpp"

namespace amr {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kFull:
      return "FULL";
    case Mode::kHybrid:
      return "HYBRID";
    case Mode::kLinear:
      return "LINEAR";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  if (s == "FULL") return Mode::kFull;
  if (s == "HYBRID") return Mode::kHybrid;
  if (s == "LINEAR") return Mode::kLinear;
  throw ValidationError("unknown mode '" + std::string(s) + "'");
}

SwitchDecision switch_mode(const SwitchState& sw, bool fault_active,
                           double delta_dev, double h) {
  SwitchDecision out{sw, false};
  if (fault_active) {
    out.state.mode = Mode::kFull;
    return out;
  }
  if (delta_dev > sw.delta_max) {
    out.state.mode = Mode::kHybrid;
    out.state.t_th += h;
    out.relinearize = out.state.t_th > sw.t_th_max;
  } else {
    out.state.mode = Mode::kLinear;
    out.state.t_th = 0.0;
  }
  return out;
}

int reference_generator(const Eigen::VectorXd& norms,
                        const std::vector<int>& gen_order) {
  if (norms.size() != static_cast<Eigen::Index>(gen_order.size()) ||
      gen_order.empty()) {
    throw DimensionError("reference_generator: need one norm per generator");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < gen_order.size(); ++i) {
    const double a = norms[static_cast<Eigen::Index>(i)];
    const double b = norms[static_cast<Eigen::Index>(best)];
    if (a < b || (a == b && gen_order[i] < gen_order[best])) best = i;
  }
  return gen_order[best];
}

}  // namespace amr
