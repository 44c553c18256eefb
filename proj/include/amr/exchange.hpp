#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "amr/dynamics.hpp"
#include "amr/netmodel.hpp"

namespace amr {

/// Internal EMF phasor (E'd + j E'q) e^{j(delta - pi/2)} of machine i.
Complex internal_emf(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Index i);

/// Algebraic network solve for the tie-line endpoint voltages given every
/// machine's internal EMF. Built once per network configuration:
/// V_b = -Y_bb^-1 Y_bg E over the Kron-reduced whole network.
class BoundaryOperator {
 public:
  BoundaryOperator(const BusNetwork& net, const std::optional<FaultSpec>& fault,
                   const ReducedYMatrix& y_study,
                   const ReducedYMatrix& y_external);

  /// Tie-line endpoint voltages (bus_order()) for area states given in the
  /// gen_order of the two ReducedYMatrix objects used at construction.
  Eigen::VectorXcd boundary_voltages(
      const Eigen::Ref<const Eigen::VectorXd>& x_study,
      const Eigen::Ref<const Eigen::VectorXd>& x_external) const;

  /// Writes the opposite area's boundary phasors into each area's input.
  void exchange(const Eigen::Ref<const Eigen::VectorXd>& x_study,
                const Eigen::Ref<const Eigen::VectorXd>& x_external,
                BoundaryInput& u_study, BoundaryInput& u_external) const;

  const std::vector<int>& bus_order() const { return bus_order_; }

 private:
  struct Source {
    bool study;
    Eigen::Index machine;
  };
  Eigen::MatrixXcd m_;            // boundary voltages = m_ * E
  std::vector<Source> sources_;   // column order of m_
  std::vector<int> bus_order_;    // row order of m_
  std::vector<Eigen::Index> study_rows_;     // per study fictitious node
  std::vector<Eigen::Index> external_rows_;  // per external fictitious node
};

/// One-off exchange for the partition stored in net.
std::pair<BoundaryInput, BoundaryInput> boundary_exchange(
    const Eigen::Ref<const Eigen::VectorXd>& x_study,
    const Eigen::Ref<const Eigen::VectorXd>& x_external, const BusNetwork& net,
    const ReducedYMatrix& y_study, const ReducedYMatrix& y_external,
    const BoundaryInput& u_study, const BoundaryInput& u_external,
    const std::optional<FaultSpec>& fault = {});

}  // namespace amr
