#pragma once

#include <optional>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "amr/dynamics.hpp"
#include "amr/linearize.hpp"
#include "amr/mor.hpp"

namespace amr {

/// Euclidean norm of each column of |Y21| (one value per generator).
Eigen::VectorXd column_norms(const Eigen::MatrixXcd& y21);

inline constexpr double kDefaultVoltageBaseKv = 20.0;

/// Siemens to per unit: S * V_base^2 / S_base. Throws ValidationError on
/// nonpositive bases.
double threshold_to_pu(double siemens, double s_base_mva,
                       double v_base_kv = kDefaultVoltageBaseKv);
double threshold_to_siemens(double pu, double s_base_mva,
                            double v_base_kv = kDefaultVoltageBaseKv);

/// Which machines keep their nonlinear equations. A machine in the nonlinear
/// set has all nine rows evaluated exactly; every row of a linearized machine
/// goes through the affine block selected by p_hat.
struct FunctionSelection {
  std::vector<int> gen_order;
  Eigen::VectorXd norms;  // aligned with gen_order
  double threshold_pu = 0.0;
  std::set<int> nonlinear_gens;
  std::set<int> linear_gens;
  int q = 0;  // retained nonlinear scalar functions, 4 per nonlinear machine
  std::vector<Eigen::Index> nonlinear_machines;  // indices into gen_order
  std::vector<Eigen::Index> linear_rows;         // state rows kept by p_hat
  Eigen::MatrixXd p_hat;                         // rows of I for linear_rows
};

/// Machine i stays nonlinear iff norms[i] >= threshold_pu or its id is in
/// always_nonlinear.
FunctionSelection select_functions(const Eigen::VectorXd& norms,
                                   const std::vector<int>& gen_order,
                                   double threshold_pu,
                                   const std::set<int>& always_nonlinear = {});

/// Partially linearized model. With a reduction the state is the balanced
/// deviation xr (x = x0 + T~ xr); without one it is the physical state.
struct HybridModel {
  FunctionSelection selection;
  std::optional<BalancedReduction> reduction;
  LinearModel lin;
  Eigen::MatrixXd a_hat;   // P^ A T~  or  P^ A
  Eigen::MatrixXd b_hat;   // P^ B, empty without a reduction
  Eigen::VectorXd x_hat0;  // P^ f(x0, u0)

  // Cached products for the reduced right-hand side.
  Eigen::MatrixXd t_nl;       // columns of T on the exact rows
  Eigen::MatrixXd a_red;      // T_L a_hat
  Eigen::MatrixXd b_red;      // T_L b_hat
  Eigen::VectorXd off_red;    // T_L x_hat0
  std::vector<Eigen::Index> lift_rows;  // states the exact rows depend on
  Eigen::MatrixXd lift;       // T~ restricted to lift_rows

  bool partitioned() const { return reduction.has_value(); }
  Eigen::Index num_states() const {
    return reduction ? reduction->r : lin.num_states();
  }
};

/// Partitioned model over a balanced reduction of lin.
HybridModel make_hybrid(const LinearModel& lin, const BalancedReduction& red,
                        FunctionSelection selection);
/// Unpartitioned model: no transform, no input matrix.
HybridModel make_hybrid_unpartitioned(const LinearModel& lin,
                                      FunctionSelection selection);

/// T [ f^(x0 + T~ xr, u) interleaved with a_hat xr + b_hat du + x_hat0 ].
Eigen::VectorXd rhs_hybrid(const Eigen::Ref<const Eigen::VectorXd>& x_r,
                           const BoundaryInput& u, const HybridModel& model,
                           const ReducedYMatrix& y,
                           std::span<const GeneratorParams> params);

/// Exact rows of the nonlinear machines, a_hat (x - x0) + x_hat0 elsewhere.
/// u only supplies the setpoints (no boundary phasors).
Eigen::VectorXd rhs_hybrid_unpartitioned(
    const Eigen::Ref<const Eigen::VectorXd>& x, const BoundaryInput& u,
    const HybridModel& model, const ReducedYMatrix& y,
    std::span<const GeneratorParams> params);

}  // namespace amr
