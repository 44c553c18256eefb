#pragma once

#include <span>

#include <Eigen/Dense>

#include "amr/dynamics.hpp"

namespace amr {

/// Small-signal model  dx' = A dx + B du,  dy = C dx  about (x0, u0).
/// f0 is the vector field at the expansion point (zero at an equilibrium);
/// it turns the model into a first-order Taylor expansion elsewhere.
struct LinearModel {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  Eigen::MatrixXd c;  // identity, outputs are the states
  Eigen::VectorXd x0;
  BoundaryInput u0;
  Eigen::VectorXd f0;

  Eigen::Index num_states() const { return a.rows(); }
  Eigen::Index num_inputs() const { return b.cols(); }
};

/// Closed-form d f / d x of the full vector field.
Eigen::MatrixXd jacobian_a(const Eigen::Ref<const Eigen::VectorXd>& x0,
                           const BoundaryInput& u0, const ReducedYMatrix& y,
                           std::span<const GeneratorParams> params);

/// Closed-form d f / d u with u = (theta, V). Zero columns when Nb = 0.
Eigen::MatrixXd jacobian_b(const Eigen::Ref<const Eigen::VectorXd>& x0,
                           const BoundaryInput& u0, const ReducedYMatrix& y,
                           std::span<const GeneratorParams> params);

/// Both Jacobians plus the expansion point. Logs nothing; callers that care
/// whether x0 is an equilibrium inspect f0.
LinearModel linearize(const Eigen::Ref<const Eigen::VectorXd>& x0,
                      const BoundaryInput& u0, const ReducedYMatrix& y,
                      std::span<const GeneratorParams> params);

/// Steady operating point near a guess. With boundary inputs (one area of a
/// partitioned system) it solves f(x, u) = 0 for the held u. Without them the
/// whole system may settle at an off-nominal common frequency, so it solves
/// f(x) = drift on every rotor-angle row (zero elsewhere) with the first
/// machine's angle pinned to its guess value.
struct OperatingPoint {
  Eigen::VectorXd x;
  double drift = 0.0;  // common d(delta)/dt, rad/s
  int iterations = 0;
};

/// Damped Newton on the analytic Jacobian. Throws NumericalError if it does
/// not converge to tol (max-norm of the residual) within max_iter steps.
OperatingPoint find_operating_point(const Eigen::Ref<const Eigen::VectorXd>& guess,
                                    const BoundaryInput& u,
                                    const ReducedYMatrix& y,
                                    std::span<const GeneratorParams> params,
                                    double tol = 1e-10, int max_iter = 50);

/// Tangent model at op, re-expanded about x_dev:
///   f(x, u) ~ f(op) + A (x - op) + B du = f0 + A (x - x_dev) + B du.
/// x_dev becomes the deviation origin, so a state at x_dev maps to zero.
LinearModel linearize_about(const OperatingPoint& op,
                            const Eigen::Ref<const Eigen::VectorXd>& x_dev,
                            const BoundaryInput& u, const ReducedYMatrix& y,
                            std::span<const GeneratorParams> params);

}  // namespace amr
