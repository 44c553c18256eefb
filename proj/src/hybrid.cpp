#include "amr/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "amr/errors.hpp"

namespace amr {

namespace {

constexpr int kN = kStatesPerMachine;

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m,
                            const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(rows[k]);
  }
  return out;
}

Eigen::MatrixXd select_cols(const Eigen::MatrixXd& m,
                            const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
  }
  return out;
}

Eigen::VectorXd select_entries(const Eigen::VectorXd& v,
                               const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = v[rows[k]];
  }
  return out;
}

// Rows evaluated exactly, machine by machine.
std::vector<Eigen::Index> exact_rows(const FunctionSelection& sel) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i : sel.nonlinear_machines) {
    for (int f = 0; f < kN; ++f) rows.push_back(kN * i + f);
  }
  return rows;
}

void check_selection(const FunctionSelection& sel, const LinearModel& lin) {
  const auto ng = static_cast<Eigen::Index>(sel.gen_order.size());
  if (lin.num_states() != kN * ng) {
    throw DimensionError("hybrid: selection covers " + std::to_string(ng) +
                         " machines, linear model has " +
                         std::to_string(lin.num_states()) + " states");
  }
}

}  // namespace

Eigen::VectorXd column_norms(const Eigen::MatrixXcd& y21) {
  Eigen::VectorXd v(y21.cols());
  for (Eigen::Index i = 0; i < y21.cols(); ++i) v[i] = y21.col(i).norm();
  return v;
}

double threshold_to_pu(double siemens, double s_base_mva, double v_base_kv) {
  if (!(s_base_mva > 0.0) || !(v_base_kv > 0.0)) {
    throw ValidationError("threshold conversion needs positive S_base and V_base");
  }
  return siemens * v_base_kv * v_base_kv / s_base_mva;
}

double threshold_to_siemens(double pu, double s_base_mva, double v_base_kv) {
  if (!(s_base_mva > 0.0) || !(v_base_kv > 0.0)) {
    throw ValidationError("threshold conversion needs positive S_base and V_base");
  }
  return pu * s_base_mva / (v_base_kv * v_base_kv);
}

FunctionSelection select_functions(const Eigen::VectorXd& norms,
                                   const std::vector<int>& gen_order,
                                   double threshold_pu,
                                   const std::set<int>& always_nonlinear) {
  if (norms.size() != static_cast<Eigen::Index>(gen_order.size())) {
    throw DimensionError("select_functions: one norm per generator required");
  }
  if (!(threshold_pu >= 0.0)) {
    throw ValidationError("select_functions: threshold must be >= 0");
  }
  FunctionSelection sel;
  sel.gen_order = gen_order;
  sel.norms = norms;
  sel.threshold_pu = threshold_pu;
  const auto ng = static_cast<Eigen::Index>(gen_order.size());
  for (Eigen::Index i = 0; i < ng; ++i) {
    const int id = gen_order[static_cast<std::size_t>(i)];
    if (norms[i] >= threshold_pu || always_nonlinear.contains(id)) {
      sel.nonlinear_gens.insert(id);
      sel.nonlinear_machines.push_back(i);
    } else {
      sel.linear_gens.insert(id);
      for (int f = 0; f < kN; ++f) sel.linear_rows.push_back(kN * i + f);
    }
  }
  sel.q = 4 * static_cast<int>(sel.nonlinear_gens.size());
  sel.p_hat = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(sel.linear_rows.size()), kN * ng);
  for (std::size_t k = 0; k < sel.linear_rows.size(); ++k) {
    sel.p_hat(static_cast<Eigen::Index>(k), sel.linear_rows[k]) = 1.0;
  }
  return sel;
}

HybridModel make_hybrid(const LinearModel& lin, const BalancedReduction& red,
                        FunctionSelection selection) {
  check_selection(selection, lin);
  HybridModel m;
  m.selection = std::move(selection);
  m.reduction = red;
  m.lin = lin;
  const auto& rows = m.selection.linear_rows;
  m.a_hat = select_rows(lin.a, rows) * red.t_inv;
  m.b_hat = select_rows(lin.b, rows);
  m.x_hat0 = select_entries(lin.f0, rows);

  const Eigen::MatrixXd t_lin = select_cols(red.t, rows);
  m.t_nl = select_cols(red.t, exact_rows(m.selection));
  m.a_red = t_lin * m.a_hat;
  m.b_red = t_lin * m.b_hat;
  m.off_red = t_lin * m.x_hat0;

  // The exact rows need every machine's angle and EMFs (network sums) and
  // the full block of each nonlinear machine.
  if (!m.selection.nonlinear_machines.empty()) {
    const Eigen::Index ng = lin.num_states() / kN;
    std::vector<bool> need(static_cast<std::size_t>(lin.num_states()), false);
    for (Eigen::Index i = 0; i < ng; ++i) {
      need[static_cast<std::size_t>(kN * i + kDelta)] = true;
      need[static_cast<std::size_t>(kN * i + kEdp)] = true;
      need[static_cast<std::size_t>(kN * i + kEqp)] = true;
    }
    for (Eigen::Index row : exact_rows(m.selection)) {
      need[static_cast<std::size_t>(row)] = true;
    }
    for (std::size_t k = 0; k < need.size(); ++k) {
      if (need[k]) m.lift_rows.push_back(static_cast<Eigen::Index>(k));
    }
  }
  m.lift = select_rows(red.t_inv, m.lift_rows);
  return m;
}

HybridModel make_hybrid_unpartitioned(const LinearModel& lin,
                                      FunctionSelection selection) {
  check_selection(selection, lin);
  HybridModel m;
  m.selection = std::move(selection);
  m.lin = lin;
  m.a_hat = select_rows(lin.a, m.selection.linear_rows);
  m.x_hat0 = select_entries(lin.f0, m.selection.linear_rows);
  return m;
}

Eigen::VectorXd rhs_hybrid(const Eigen::Ref<const Eigen::VectorXd>& x_r,
                           const BoundaryInput& u, const HybridModel& model,
                           const ReducedYMatrix& y,
                           std::span<const GeneratorParams> params) {
  if (!model.reduction) {
    throw DimensionError("rhs_hybrid: model has no balanced reduction");
  }
  const LinearModel& lin = model.lin;
  if (x_r.size() != model.reduction->r) {
    throw DimensionError("rhs_hybrid: reduced state has " +
                         std::to_string(x_r.size()) + " entries, expected " +
                         std::to_string(model.reduction->r));
  }
  check_dimensions(lin.num_states(), y, u, params.size());

  Eigen::VectorXd out = model.off_red;
  out.noalias() += model.a_red * x_r;
  if (u.num_boundary() > 0) {
    out.noalias() += model.b_red * (u.as_vector() - lin.u0.as_vector());
  }
  const auto& machines = model.selection.nonlinear_machines;
  if (machines.empty()) return out;

  Eigen::VectorXd x(lin.num_states());
  const Eigen::VectorXd lifted = model.lift * x_r;
  for (std::size_t k = 0; k < model.lift_rows.size(); ++k) {
    const Eigen::Index row = model.lift_rows[k];
    x[row] = lin.x0[row] + lifted[static_cast<Eigen::Index>(k)];
  }
  Eigen::VectorXd f_nl(kN * static_cast<Eigen::Index>(machines.size()));
  for (std::size_t k = 0; k < machines.size(); ++k) {
    const Eigen::Index i = machines[k];
    double id = 0.0, iq = 0.0;
    machine_current(x, y, u, i, id, iq);
    machine_rhs(x.data() + kN * i, id, iq, params[static_cast<std::size_t>(i)],
                u.p_ref[i], u.v_ref[i],
                f_nl.data() + kN * static_cast<Eigen::Index>(k));
  }
  out.noalias() += model.t_nl * f_nl;
  return out;
}

Eigen::VectorXd rhs_hybrid_unpartitioned(
    const Eigen::Ref<const Eigen::VectorXd>& x, const BoundaryInput& u,
    const HybridModel& model, const ReducedYMatrix& y,
    std::span<const GeneratorParams> params) {
  if (model.reduction) {
    throw DimensionError("rhs_hybrid_unpartitioned: model is partitioned");
  }
  check_dimensions(x.size(), y, u, params.size());
  if (x.size() != model.lin.num_states()) {
    throw DimensionError("rhs_hybrid_unpartitioned: state size mismatch");
  }
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i : model.selection.nonlinear_machines) {
    double id = 0.0, iq = 0.0;
    machine_current(x, y, u, i, id, iq);
    machine_rhs(x.data() + kN * i, id, iq, params[static_cast<std::size_t>(i)],
                u.p_ref[i], u.v_ref[i], out.data() + kN * i);
  }
  const auto& rows = model.selection.linear_rows;
  if (!rows.empty()) {
    Eigen::VectorXd lin_part = model.x_hat0;
    lin_part.noalias() += model.a_hat * (x - model.lin.x0);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out[rows[k]] = lin_part[static_cast<Eigen::Index>(k)];
    }
  }
  return out;
}

}  // namespace amr
