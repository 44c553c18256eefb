#pragma once

#include <Eigen/Dense>

#include "amr/linearize.hpp"

namespace amr {

/// Hankel values below this are treated as numerically zero: the matching
/// balanced coordinates cannot be formed and are always truncated.
inline constexpr double kHankelFloor = 1e-14;

/// Solves A W + W A^T + Q = 0 for W (Bartels-Stewart on the complex Schur
/// form, then iterative refinement). Throws NumericalError listing the
/// eigenvalues of A with nonnegative real part.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& q);

struct BalancingTransform {
  Eigen::MatrixXd t;      // k x n, k = number of unflagged Hankel values
  Eigen::MatrixXd t_inv;  // n x k, t * t_inv = I
  Eigen::VectorXd hankel;  // all n values, nonincreasing
  Eigen::Index num_flagged = 0;  // trailing values below kHankelFloor
};

/// Square-root balancing. In the new coordinates both Gramians equal
/// diag(hankel). Rows for flagged (numerically zero) values are omitted
/// rather than formed with a 1/sqrt(0) scale.
BalancingTransform balance_transform(const Eigen::MatrixXd& wc,
                                     const Eigen::MatrixXd& wo);

/// Smallest r with 2 * sum_{i>r} sigma_i <= tol, enlarged so that a group of
/// tied values (relative gap below 1e-12) is never split.
Eigen::Index select_order(const Eigen::VectorXd& hankel, double tol);

/// Truncated balanced realization. Coordinates are deviations from the
/// linearization point: x = x0 + t_inv * xr, xr = t * (x - x0).
struct BalancedReduction {
  Eigen::MatrixXd t;      // r x n
  Eigen::MatrixXd t_inv;  // n x r
  Eigen::VectorXd hankel;
  Eigen::Index r = 0;
  Eigen::Index num_flagged = 0;
  Eigen::MatrixXd a_r;  // T A T~
  Eigen::MatrixXd b_r;  // T B
  Eigen::MatrixXd c_r;  // T~ (C is the identity)

  /// 2 * sum of the discarded Hankel values.
  double error_bound() const;
};

/// Gramians of (A, B, I), balancing and truncation at tol. r is capped at the
/// number of unflagged Hankel values.
BalancedReduction reduce_linear(const LinearModel& lin, double tol);

}  // namespace amr
