#include "amr/exchange.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "amr/errors.hpp"

namespace amr {

Complex internal_emf(const Eigen::Ref<const Eigen::VectorXd>& x,
                     Eigen::Index i) {
  const double* m = x.data() + kStatesPerMachine * i;
  return Complex(m[kEdp], m[kEqp]) *
         std::polar(1.0, m[kDelta] - std::numbers::pi / 2.0);
}

BoundaryOperator::BoundaryOperator(const BusNetwork& net,
                                   const std::optional<FaultSpec>& fault,
                                   const ReducedYMatrix& y_study,
                                   const ReducedYMatrix& y_external) {
  if (!net.partition) throw ValidationError("network has no partition");
  const PartitionSpec& part = *net.partition;

  for (int tie : part.tie_lines) {
    const Branch& br = net.branch(tie);
    if (!br.in_service) continue;
    for (int bus : {br.from_bus, br.to_bus}) {
      if (std::find(bus_order_.begin(), bus_order_.end(), bus) ==
          bus_order_.end()) {
        bus_order_.push_back(bus);
      }
    }
  }
  auto row_of = [&](int bus) {
    return static_cast<Eigen::Index>(
        std::find(bus_order_.begin(), bus_order_.end(), bus) -
        bus_order_.begin());
  };
  for (int bus : y_study.boundary_order) study_rows_.push_back(row_of(bus));
  for (int bus : y_external.boundary_order) external_rows_.push_back(row_of(bus));

  std::vector<Node> keep;
  for (std::size_t i = 0; i < y_study.gen_order.size(); ++i) {
    keep.push_back({NodeKind::kInternal, y_study.gen_order[i]});
    sources_.push_back({true, static_cast<Eigen::Index>(i)});
  }
  for (std::size_t i = 0; i < y_external.gen_order.size(); ++i) {
    keep.push_back({NodeKind::kInternal, y_external.gen_order[i]});
    sources_.push_back({false, static_cast<Eigen::Index>(i)});
  }
  const auto ng = static_cast<Eigen::Index>(keep.size());
  for (int bus : bus_order_) keep.push_back({NodeKind::kBus, bus});
  const auto nb = static_cast<Eigen::Index>(bus_order_.size());

  const AdmittanceMatrix red = kron_reduce(build_admittance(net, fault), keep);
  const Eigen::MatrixXcd y_bg = red.y.bottomLeftCorner(nb, ng);
  const Eigen::MatrixXcd y_bb = red.y.bottomRightCorner(nb, nb);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(y_bb);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) {
    std::ostringstream msg;
    msg << "boundary solve is singular; island around buses:";
    const Eigen::MatrixXcd kernel = lu.kernel();
    for (Eigen::Index a = 0; a < nb; ++a) {
      if (kernel.row(a).cwiseAbs().maxCoeff() > 1e-8) {
        msg << " " << bus_order_[static_cast<std::size_t>(a)];
      }
    }
    throw NumericalError(msg.str());
  }
  m_ = -lu.solve(y_bg);
}

Eigen::VectorXcd BoundaryOperator::boundary_voltages(
    const Eigen::Ref<const Eigen::VectorXd>& x_study,
    const Eigen::Ref<const Eigen::VectorXd>& x_external) const {
  Eigen::VectorXcd e(static_cast<Eigen::Index>(sources_.size()));
  for (std::size_t k = 0; k < sources_.size(); ++k) {
    const Source& s = sources_[k];
    e[static_cast<Eigen::Index>(k)] =
        internal_emf(s.study ? x_study : x_external, s.machine);
  }
  return m_ * e;
}

void BoundaryOperator::exchange(
    const Eigen::Ref<const Eigen::VectorXd>& x_study,
    const Eigen::Ref<const Eigen::VectorXd>& x_external,
    BoundaryInput& u_study, BoundaryInput& u_external) const {
  const Eigen::VectorXcd v = boundary_voltages(x_study, x_external);
  auto fill = [&](const std::vector<Eigen::Index>& rows, BoundaryInput& u) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Complex vk = v[rows[k]];
      const auto i = static_cast<Eigen::Index>(k);
      // Keep theta continuous in time; the angle deviation feeds linear models.
      const double prev = u.theta[i];
      u.theta[i] = prev + std::remainder(std::arg(vk) - prev,
                                         2.0 * std::numbers::pi);
      u.v[i] = std::abs(vk);
    }
  };
  fill(study_rows_, u_study);
  fill(external_rows_, u_external);
}

std::pair<BoundaryInput, BoundaryInput> boundary_exchange(
    const Eigen::Ref<const Eigen::VectorXd>& x_study,
    const Eigen::Ref<const Eigen::VectorXd>& x_external, const BusNetwork& net,
    const ReducedYMatrix& y_study, const ReducedYMatrix& y_external,
    const BoundaryInput& u_study, const BoundaryInput& u_external,
    const std::optional<FaultSpec>& fault) {
  const BoundaryOperator op(net, fault, y_study, y_external);
  std::pair<BoundaryInput, BoundaryInput> out{u_study, u_external};
  op.exchange(x_study, x_external, out.first, out.second);
  return out;
}

}  // namespace amr
