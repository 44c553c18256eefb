#include "amr/linearize.hpp"

#include <array>
#include <cmath>
#include <string>

#include "amr/errors.hpp"

namespace amr {

namespace {

constexpr int kN = kStatesPerMachine;

// Partials of (Id_i, Iq_i) with respect to every delta_j, E'd_j, E'q_j and to
// the boundary inputs.
struct CurrentPartials {
  Eigen::VectorXd id_delta, iq_delta;
  Eigen::VectorXd id_ed, iq_ed;
  Eigen::VectorXd id_eq, iq_eq;
  Eigen::VectorXd id_theta, iq_theta;
  Eigen::VectorXd id_v, iq_v;
  double id = 0.0, iq = 0.0;

  CurrentPartials(Eigen::Index ng, Eigen::Index nb)
      : id_delta(Eigen::VectorXd::Zero(ng)), iq_delta(Eigen::VectorXd::Zero(ng)),
        id_ed(ng), iq_ed(ng), id_eq(ng), iq_eq(ng),
        id_theta(nb), iq_theta(nb), id_v(nb), iq_v(nb) {}
};

CurrentPartials current_partials(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const BoundaryInput& u,
                                 const ReducedYMatrix& y, Eigen::Index i) {
  const Eigen::Index ng = y.num_generators();
  const Eigen::Index nb = y.num_boundary();
  CurrentPartials cp(ng, nb);
  const double delta_i = x[kN * i + kDelta];
  for (Eigen::Index j = 0; j < ng; ++j) {
    const double g = y.y11(i, j).real();
    const double b = y.y11(i, j).imag();
    const double phi = delta_i - x[kN * j + kDelta];
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double ed = x[kN * j + kEdp];
    const double eq = x[kN * j + kEqp];
    cp.id_ed[j] = g * c + b * s;
    cp.id_eq[j] = g * s - b * c;
    cp.iq_ed[j] = -g * s + b * c;
    cp.iq_eq[j] = g * c + b * s;
    const double term_d = ed * cp.id_ed[j] + eq * cp.id_eq[j];
    const double term_q = ed * cp.iq_ed[j] + eq * cp.iq_eq[j];
    cp.id += term_d;
    cp.iq += term_q;
    if (j == i) continue;
    // d/d delta_i of the (i, j) term is +d/dphi, d/d delta_j is -d/dphi;
    // d term_d/dphi = term_q and d term_q/dphi = -term_d.
    cp.id_delta[j] -= term_q;
    cp.iq_delta[j] += term_d;
    cp.id_delta[i] += term_q;
    cp.iq_delta[i] -= term_d;
  }
  for (Eigen::Index k = 0; k < nb; ++k) {
    const double g = y.y12(i, k).real();
    const double b = y.y12(i, k).imag();
    const double psi = delta_i - u.theta[k];
    const double c = std::cos(psi);
    const double s = std::sin(psi);
    cp.id_v[k] = g * s - b * c;
    cp.iq_v[k] = g * c + b * s;
    const double term_d = u.v[k] * cp.id_v[k];
    const double term_q = u.v[k] * cp.iq_v[k];
    cp.id += term_d;
    cp.iq += term_q;
    cp.id_delta[i] += term_q;
    cp.iq_delta[i] -= term_d;
    cp.id_theta[k] = -term_q;
    cp.iq_theta[k] = term_d;
  }
  return cp;
}

// Coefficients with which Id_i and Iq_i enter each current-dependent row.
struct RowWeights {
  int field;
  double w_id;
  double w_iq;
};

std::array<RowWeights, 4> current_row_weights(const double* xm,
                                              const CurrentPartials& cp,
                                              const GeneratorParams& p,
                                              double& dvt_ded,
                                              double& dvt_deq) {
  const double ed = xm[kEdp];
  const double eq = xm[kEqp];
  const double vd = ed - p.ra * cp.id + p.xd_p * cp.iq;
  const double vq = eq - p.ra * cp.iq - p.xd_p * cp.id;
  const double vt = std::hypot(vd, vq);
  dvt_ded = vd / vt;
  dvt_deq = vq / vt;
  const double dvt_did = (-p.ra * vd - p.xd_p * vq) / vt;
  const double dvt_diq = (p.xd_p * vd - p.ra * vq) / vt;
  const double vr_gain = -p.ka / p.ta;
  return {{
      {kVr, vr_gain * dvt_did, vr_gain * dvt_diq},
      {kEdp, 0.0, (p.xq - p.xq_p) / p.tqo_p},
      {kEqp, -(p.xd - p.xd_p) / p.tdo_p, 0.0},
      {kOmega, -ed / (2.0 * p.h), -eq / (2.0 * p.h)},
  }};
}

}  // namespace

Eigen::MatrixXd jacobian_a(const Eigen::Ref<const Eigen::VectorXd>& x0,
                           const BoundaryInput& u0, const ReducedYMatrix& y,
                           std::span<const GeneratorParams> params) {
  check_dimensions(x0.size(), y, u0, params.size());
  const Eigen::Index ng = y.num_generators();
  const Eigen::Index n = kN * ng;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);

  for (Eigen::Index i = 0; i < ng; ++i) {
    const GeneratorParams& p = params[static_cast<std::size_t>(i)];
    const double* xm = x0.data() + kN * i;
    const Eigen::Index r = kN * i;
    auto at = [&](int row, int col) -> double& { return a(r + row, r + col); };

    at(kDelta, kOmega) = kOmegaBase;

    at(kPm, kPm) = -1.0 / p.tch;
    at(kPm, kPgv) = 1.0 / p.tch;

    at(kPgv, kPgv) = -1.0 / p.tgv;
    at(kPgv, kOmega) = -1.0 / (p.r_gov * p.tgv);

    at(kVr, kVr) = -1.0 / p.ta;
    at(kVr, kRf) = p.ka / p.ta;
    at(kVr, kEfd) = -p.ka * p.kf / (p.tf * p.ta);

    at(kRf, kRf) = -1.0 / p.tf;
    at(kRf, kEfd) = p.kf / (p.tf * p.tf);

    const double efd = xm[kEfd];
    at(kEfd, kEfd) =
        -(p.ke + p.ae * std::exp(p.be * efd) * (1.0 + p.be * efd)) / p.te;
    at(kEfd, kVr) = 1.0 / p.te;

    at(kEdp, kEdp) = -1.0 / p.tqo_p;
    at(kEqp, kEqp) = -1.0 / p.tdo_p;
    at(kEqp, kEfd) = 1.0 / p.tdo_p;

    at(kOmega, kPm) = 1.0 / (2.0 * p.h);
    at(kOmega, kOmega) = -p.d / (2.0 * p.h);

    const CurrentPartials cp = current_partials(x0, u0, y, i);
    double dvt_ded = 0.0, dvt_deq = 0.0;
    const auto weights = current_row_weights(xm, cp, p, dvt_ded, dvt_deq);

    // Direct (non-current) dependence on the machine's own EMFs.
    at(kVr, kEdp) += -p.ka / p.ta * dvt_ded;
    at(kVr, kEqp) += -p.ka / p.ta * dvt_deq;
    at(kOmega, kEdp) += -cp.id / (2.0 * p.h);
    at(kOmega, kEqp) += -cp.iq / (2.0 * p.h);

    for (const RowWeights& w : weights) {
      const Eigen::Index row = r + w.field;
      for (Eigen::Index j = 0; j < ng; ++j) {
        const Eigen::Index c = kN * j;
        a(row, c + kDelta) += w.w_id * cp.id_delta[j] + w.w_iq * cp.iq_delta[j];
        a(row, c + kEdp) += w.w_id * cp.id_ed[j] + w.w_iq * cp.iq_ed[j];
        a(row, c + kEqp) += w.w_id * cp.id_eq[j] + w.w_iq * cp.iq_eq[j];
      }
    }
  }
  return a;
}

Eigen::MatrixXd jacobian_b(const Eigen::Ref<const Eigen::VectorXd>& x0,
                           const BoundaryInput& u0, const ReducedYMatrix& y,
                           std::span<const GeneratorParams> params) {
  check_dimensions(x0.size(), y, u0, params.size());
  const Eigen::Index ng = y.num_generators();
  const Eigen::Index nb = y.num_boundary();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(kN * ng, 2 * nb);
  if (nb == 0) return b;

  for (Eigen::Index i = 0; i < ng; ++i) {
    const GeneratorParams& p = params[static_cast<std::size_t>(i)];
    const CurrentPartials cp = current_partials(x0, u0, y, i);
    double dvt_ded = 0.0, dvt_deq = 0.0;
    const auto weights =
        current_row_weights(x0.data() + kN * i, cp, p, dvt_ded, dvt_deq);
    for (const RowWeights& w : weights) {
      const Eigen::Index row = kN * i + w.field;
      for (Eigen::Index k = 0; k < nb; ++k) {
        b(row, k) = w.w_id * cp.id_theta[k] + w.w_iq * cp.iq_theta[k];
        b(row, nb + k) = w.w_id * cp.id_v[k] + w.w_iq * cp.iq_v[k];
      }
    }
  }
  return b;
}

LinearModel linearize(const Eigen::Ref<const Eigen::VectorXd>& x0,
                      const BoundaryInput& u0, const ReducedYMatrix& y,
                      std::span<const GeneratorParams> params) {
  LinearModel lin;
  lin.a = jacobian_a(x0, u0, y, params);
  lin.b = jacobian_b(x0, u0, y, params);
  lin.c = Eigen::MatrixXd::Identity(lin.a.rows(), lin.a.cols());
  lin.x0 = x0;
  lin.u0 = u0;
  lin.f0 = rhs_full(x0, y, u0, params);
  return lin;
}

OperatingPoint find_operating_point(
    const Eigen::Ref<const Eigen::VectorXd>& guess, const BoundaryInput& u,
    const ReducedYMatrix& y, std::span<const GeneratorParams> params,
    double tol, int max_iter) {
  const Eigen::Index n = guess.size();
  const bool pinned = y.num_boundary() == 0;  // rotation is a free direction
  OperatingPoint op;
  op.x = guess;
  if (pinned && n > 0) {
    op.drift = kOmegaBase * (guess[kOmega] - 1.0);
  }

  auto residual = [&](const Eigen::VectorXd& x, double drift) {
    Eigen::VectorXd r = rhs_full(x, y, u, params);
    if (pinned) {
      for (Eigen::Index i = kDelta; i < n; i += kStatesPerMachine) r[i] -= drift;
    }
    return r;
  };

  Eigen::VectorXd r = residual(op.x, op.drift);
  double norm = r.cwiseAbs().maxCoeff();
  for (int it = 0; it < max_iter && !(norm < tol); ++it) {
    Eigen::MatrixXd j = jacobian_a(op.x, u, y, params);
    if (pinned) {
      // The pinned angle's column carries the drift unknown instead.
      j.col(kDelta).setZero();
      for (Eigen::Index i = kDelta; i < n; i += kStatesPerMachine) j(i, kDelta) = -1.0;
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(j);
    if (!(lu.rcond() > 1e-14)) {
      throw NumericalError("operating point: singular Jacobian at iteration " +
                           std::to_string(it));
    }
    const Eigen::VectorXd step = lu.solve(-r);
    double t = 1.0;
    bool improved = false;
    for (int halvings = 0; halvings < 30; ++halvings, t *= 0.5) {
      Eigen::VectorXd x = op.x + t * step;
      double drift = op.drift;
      if (pinned) {
        x[kDelta] = op.x[kDelta];
        drift += t * step[kDelta];
      }
      const Eigen::VectorXd rr = residual(x, drift);
      const double nn = rr.cwiseAbs().maxCoeff();
      if (std::isfinite(nn) && nn < norm) {
        op.x = std::move(x);
        op.drift = drift;
        r = rr;
        norm = nn;
        improved = true;
        break;
      }
    }
    op.iterations = it + 1;
    if (!improved) break;
  }
  if (!(norm < tol)) {
    throw NumericalError("operating point: Newton stalled at residual " +
                         std::to_string(norm) + " after " +
                         std::to_string(op.iterations) + " iterations");
  }
  return op;
}

LinearModel linearize_about(const OperatingPoint& op,
                            const Eigen::Ref<const Eigen::VectorXd>& x_dev,
                            const BoundaryInput& u, const ReducedYMatrix& y,
                            std::span<const GeneratorParams> params) {
  LinearModel lin = linearize(op.x, u, y, params);
  lin.f0.noalias() += lin.a * (x_dev - op.x);
  lin.x0 = x_dev;
  return lin;
}

}  // namespace amr
