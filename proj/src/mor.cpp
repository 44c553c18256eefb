#include "amr/mor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "amr/errors.hpp"

namespace amr {

namespace {

// Solves S X + X S^H = -Qh for upper-triangular S, one column at a time
// from the right (column j only couples to columns k > j).
Eigen::MatrixXcd solve_triangular_sylvester(const Eigen::MatrixXcd& s,
                                            const Eigen::MatrixXcd& qh) {
  const Eigen::Index n = s.rows();
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(n, n);
  Eigen::VectorXcd rhs(n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    rhs = -qh.col(j);
    const Eigen::Index tail = n - 1 - j;
    if (tail > 0) {
      rhs.noalias() -=
          x.rightCols(tail) * s.row(j).tail(tail).adjoint();
    }
    const std::complex<double> shift = std::conj(s(j, j));
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      std::complex<double> acc = rhs[i];
      for (Eigen::Index l = i + 1; l < n; ++l) acc -= s(i, l) * x(l, j);
      x(i, j) = acc / (s(i, i) + shift);
    }
  }
  return x;
}

Eigen::MatrixXd lyap_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& w,
                              const Eigen::MatrixXd& q) {
  Eigen::MatrixXd r = q;
  r.noalias() += a * w;
  r.noalias() += w * a.transpose();
  return r;
}

// W = L L^T with negative (round-off) eigenvalues clipped to zero.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& w) {
  const Eigen::MatrixXd sym = 0.5 * (w + w.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) {
    throw NumericalError("Gramian eigendecomposition did not converge");
  }
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

}  // namespace

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& q) {
  if (a.rows() != a.cols() || q.rows() != a.rows() || q.cols() != a.cols()) {
    throw DimensionError("solve_lyapunov: A and Q must be square and equal size");
  }
  const Eigen::Index n = a.rows();
  if (n == 0) return Eigen::MatrixXd(0, 0);

  Eigen::ComplexSchur<Eigen::MatrixXcd> schur(a.cast<std::complex<double>>());
  if (schur.info() != Eigen::Success) {
    throw NumericalError("solve_lyapunov: Schur decomposition failed");
  }
  const Eigen::MatrixXcd& s = schur.matrixT();
  const Eigen::MatrixXcd& u = schur.matrixU();

  std::ostringstream bad;
  int num_bad = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(s(i, i).real() < 0.0)) {
      if (num_bad++ < 8) bad << " " << s(i, i);
    }
  }
  if (num_bad > 0) {
    throw NumericalError("solve_lyapunov: A is not Hurwitz (" +
                         std::to_string(num_bad) +
                         " eigenvalues with Re >= 0:" + bad.str() + ")");
  }

  auto solve = [&](const Eigen::MatrixXd& rhs) {
    const Eigen::MatrixXcd qh = u.adjoint() * rhs * u;
    const Eigen::MatrixXcd x = solve_triangular_sylvester(s, qh);
    Eigen::MatrixXd w = (u * x * u.adjoint()).real();
    return Eigen::MatrixXd(0.5 * (w + w.transpose()));
  };

  Eigen::MatrixXd w = solve(q);
  double res = lyap_residual(a, w, q).norm();
  // A couple of refinement sweeps; each reuses the Schur factors.
  for (int it = 0; it < 3 && res > 0.0; ++it) {
    const Eigen::MatrixXd dw = solve(lyap_residual(a, w, q));
    const Eigen::MatrixXd cand = w + dw;
    const double cand_res = lyap_residual(a, cand, q).norm();
    if (!(cand_res < res)) break;
    w = cand;
    res = cand_res;
  }
  if (!w.allFinite()) {
    throw NumericalError("solve_lyapunov: solution is not finite");
  }
  return w;
}

BalancingTransform balance_transform(const Eigen::MatrixXd& wc,
                                     const Eigen::MatrixXd& wo) {
  if (wc.rows() != wc.cols() || wo.rows() != wo.cols() ||
      wc.rows() != wo.rows()) {
    throw DimensionError("balance_transform: Gramians must be square, same size");
  }
  const Eigen::Index n = wc.rows();
  const Eigen::MatrixXd lc = psd_factor(wc);
  const Eigen::MatrixXd lo = psd_factor(wo);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(lo.transpose() * lc,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  BalancingTransform out;
  out.hankel = svd.singularValues();
  Eigen::Index k = 0;
  while (k < n && out.hankel[k] >= kHankelFloor) ++k;
  out.num_flagged = n - k;

  const Eigen::VectorXd scale = out.hankel.head(k).cwiseSqrt().cwiseInverse();
  out.t = scale.asDiagonal() * svd.matrixU().leftCols(k).transpose() *
          lo.transpose();
  out.t_inv = lc * svd.matrixV().leftCols(k) * scale.asDiagonal();
  return out;
}

Eigen::Index select_order(const Eigen::VectorXd& hankel, double tol) {
  const Eigen::Index n = hankel.size();
  // tail[r] = sum of hankel[r..n-1]
  Eigen::VectorXd tail = Eigen::VectorXd::Zero(n + 1);
  for (Eigen::Index i = n - 1; i >= 0; --i) tail[i] = tail[i + 1] + hankel[i];
  Eigen::Index r = 0;
  while (r < n && !(2.0 * tail[r] <= tol)) ++r;
  while (r > 0 && r < n) {
    const double hi = hankel[r - 1];
    const double lo = hankel[r];
    if (std::abs(hi - lo) <= 1e-12 * std::max(std::abs(hi), std::abs(lo)) &&
        hi > 0.0) {
      ++r;
    } else {
      break;
    }
  }
  return r;
}

double BalancedReduction::error_bound() const {
  return 2.0 * hankel.tail(hankel.size() - r).sum();
}

BalancedReduction reduce_linear(const LinearModel& lin, double tol) {
  const Eigen::MatrixXd& a = lin.a;
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd wc = solve_lyapunov(a, lin.b * lin.b.transpose());
  const Eigen::MatrixXd wo =
      solve_lyapunov(a.transpose(), lin.c.transpose() * lin.c);
  const BalancingTransform bal = balance_transform(wc, wo);

  BalancedReduction red;
  red.hankel = bal.hankel;
  red.num_flagged = bal.num_flagged;
  red.r = std::min(select_order(bal.hankel, tol), n - bal.num_flagged);
  red.t = bal.t.topRows(red.r);
  red.t_inv = bal.t_inv.leftCols(red.r);
  if (red.r > 0) {
    // Restore T T~ = I to round-off; the 1/sqrt(sigma) scaling amplifies
    // cancellation in the small retained values.
    const Eigen::MatrixXd gram = red.t * red.t_inv;
    red.t_inv = red.t_inv * gram.partialPivLu().inverse();
  }
  red.a_r = red.t * a * red.t_inv;
  red.b_r = red.t * lin.b;
  red.c_r = lin.c * red.t_inv;
  return red;
}

}  // namespace amr
