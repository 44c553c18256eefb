#include "amr/dynamics.hpp"

#include <cmath>
#include <string>

#include "amr/errors.hpp"

namespace amr {

SystemState::SystemState(std::span<const MachineState> machines)
    : x_(static_cast<Eigen::Index>(machines.size()) * kStatesPerMachine) {
  for (std::size_t i = 0; i < machines.size(); ++i) {
    set_machine(static_cast<Eigen::Index>(i), machines[i]);
  }
}

MachineState SystemState::machine(Eigen::Index i) const {
  const double* m = x_.data() + i * kStatesPerMachine;
  return MachineState{m[kDelta], m[kPm],  m[kPgv], m[kVr],   m[kRf],
                      m[kEfd],   m[kEdp], m[kEqp], m[kOmega]};
}

void SystemState::set_machine(Eigen::Index i, const MachineState& s) {
  double* m = x_.data() + i * kStatesPerMachine;
  m[kDelta] = s.delta;
  m[kPm] = s.pm;
  m[kPgv] = s.pgv;
  m[kVr] = s.vr;
  m[kRf] = s.rf;
  m[kEfd] = s.efd;
  m[kEdp] = s.ed_p;
  m[kEqp] = s.eq_p;
  m[kOmega] = s.omega;
}

Eigen::VectorXd BoundaryInput::as_vector() const {
  Eigen::VectorXd u(2 * theta.size());
  u << theta, v;
  return u;
}

void BoundaryInput::set_from_vector(const Eigen::Ref<const Eigen::VectorXd>& u) {
  const Eigen::Index nb = u.size() / 2;
  theta = u.head(nb);
  v = u.tail(nb);
}

void check_dimensions(Eigen::Index x_size, const ReducedYMatrix& y,
                      const BoundaryInput& u, std::size_t num_params) {
  const Eigen::Index ng = y.num_generators();
  const Eigen::Index nb = y.num_boundary();
  if (x_size != kStatesPerMachine * ng) {
    throw DimensionError("state has " + std::to_string(x_size) +
                         " entries, expected 9 x " + std::to_string(ng));
  }
  if (y.y11.rows() != ng || y.y11.cols() != ng || y.y12.rows() != ng ||
      y.y12.cols() != nb) {
    throw DimensionError("admittance blocks do not match gen/boundary order");
  }
  if (u.theta.size() != nb || u.v.size() != nb) {
    throw DimensionError("boundary input has " +
                         std::to_string(u.theta.size()) + " phasors, expected " +
                         std::to_string(nb));
  }
  if (u.p_ref.size() != ng || u.v_ref.size() != ng ||
      num_params != static_cast<std::size_t>(ng)) {
    throw DimensionError("setpoints/params do not match machine count");
  }
}

void machine_current(const Eigen::Ref<const Eigen::VectorXd>& x,
                     const ReducedYMatrix& y, const BoundaryInput& u,
                     Eigen::Index i, double& id, double& iq) {
  const Eigen::Index ng = y.num_generators();
  const double delta_i = x[kStatesPerMachine * i + kDelta];
  double sum_d = 0.0;
  double sum_q = 0.0;
  for (Eigen::Index j = 0; j < ng; ++j) {
    const double* xj = x.data() + kStatesPerMachine * j;
    const double g = y.y11(i, j).real();
    const double b = y.y11(i, j).imag();
    const double phi = delta_i - xj[kDelta];
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double ed = xj[kEdp];
    const double eq = xj[kEqp];
    sum_d += ed * (g * c + b * s) + eq * (g * s - b * c);
    sum_q += ed * (-g * s + b * c) + eq * (g * c + b * s);
  }
  for (Eigen::Index k = 0; k < y.num_boundary(); ++k) {
    const double g = y.y12(i, k).real();
    const double b = y.y12(i, k).imag();
    const double psi = delta_i - u.theta[k];
    const double c = std::cos(psi);
    const double s = std::sin(psi);
    sum_d += u.v[k] * (g * s - b * c);
    sum_q += u.v[k] * (g * c + b * s);
  }
  id = sum_d;
  iq = sum_q;
}

MachineCurrents machine_currents(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const ReducedYMatrix& y,
                                 const BoundaryInput& u) {
  const Eigen::Index ng = y.num_generators();
  if (x.size() != kStatesPerMachine * ng || u.theta.size() != y.num_boundary() ||
      u.v.size() != y.num_boundary()) {
    throw DimensionError("machine_currents: state/input sizes do not match Y");
  }
  MachineCurrents out{Eigen::VectorXd(ng), Eigen::VectorXd(ng)};
  for (Eigen::Index i = 0; i < ng; ++i) {
    machine_current(x, y, u, i, out.id[i], out.iq[i]);
  }
  return out;
}

double terminal_voltage(double ed_p, double eq_p, double id, double iq,
                        const GeneratorParams& p) {
  const double vd = ed_p - p.ra * id + p.xd_p * iq;
  const double vq = eq_p - p.ra * iq - p.xd_p * id;
  return std::hypot(vd, vq);
}

void machine_rhs(const double* xm, double id, double iq,
                 const GeneratorParams& p, double p_ref, double v_ref,
                 double* dxm) {
  const double slip = xm[kOmega] - 1.0;
  const double efd = xm[kEfd];
  const double ed = xm[kEdp];
  const double eq = xm[kEqp];
  const double vt = terminal_voltage(ed, eq, id, iq, p);

  dxm[kDelta] = kOmegaBase * slip;
  dxm[kPm] = (-xm[kPm] + xm[kPgv]) / p.tch;
  dxm[kPgv] = (-xm[kPgv] + p_ref - slip / p.r_gov) / p.tgv;
  dxm[kVr] = (-xm[kVr] + p.ka * xm[kRf] - p.ka * p.kf / p.tf * efd +
              p.ka * (v_ref - vt)) /
             p.ta;
  dxm[kRf] = (-xm[kRf] + p.kf / p.tf * efd) / p.tf;
  dxm[kEfd] = (-(p.ke + p.ae * std::exp(p.be * efd)) * efd + xm[kVr]) / p.te;
  dxm[kEdp] = (-ed + (p.xq - p.xq_p) * iq) / p.tqo_p;
  dxm[kEqp] = (-eq - (p.xd - p.xd_p) * id + efd) / p.tdo_p;
  dxm[kOmega] = (xm[kPm] - ed * id - eq * iq - p.d * slip) / (2.0 * p.h);
}

void rhs_full_into(const Eigen::Ref<const Eigen::VectorXd>& x,
                   const ReducedYMatrix& y, const BoundaryInput& u,
                   std::span<const GeneratorParams> params,
                   Eigen::Ref<Eigen::VectorXd> dx) {
  const Eigen::Index ng = y.num_generators();
  for (Eigen::Index i = 0; i < ng; ++i) {
    double id = 0.0, iq = 0.0;
    machine_current(x, y, u, i, id, iq);
    machine_rhs(x.data() + kStatesPerMachine * i, id, iq,
                params[static_cast<std::size_t>(i)], u.p_ref[i], u.v_ref[i],
                dx.data() + kStatesPerMachine * i);
  }
}

Eigen::VectorXd rhs_full(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const ReducedYMatrix& y, const BoundaryInput& u,
                         std::span<const GeneratorParams> params) {
  check_dimensions(x.size(), y, u, params.size());
  Eigen::VectorXd dx(x.size());
  rhs_full_into(x, y, u, params, dx);
  return dx;
}

std::vector<GeneratorParams> params_for(const BusNetwork& net,
                                        const ReducedYMatrix& y) {
  std::vector<GeneratorParams> out;
  out.reserve(y.gen_order.size());
  for (int id : y.gen_order) out.push_back(net.generator(id).params);
  return out;
}

std::pair<SystemState, BoundaryInput> init_equilibrium(
    const BusNetwork& net, const ReducedYMatrix& y) {
  using std::numbers::pi;
  const Eigen::Index ng = y.num_generators();
  const Eigen::Index nb = y.num_boundary();
  const Complex j(0.0, 1.0);

  BoundaryInput u;
  u.theta.resize(nb);
  u.v.resize(nb);
  for (Eigen::Index k = 0; k < nb; ++k) {
    const Bus& far = net.bus(y.boundary_order[static_cast<std::size_t>(k)]);
    u.theta[k] = far.voltage_angle;
    u.v[k] = far.voltage_magnitude;
  }
  u.p_ref.resize(ng);
  u.v_ref.resize(ng);

  // Rotor angles and transient EMFs from the terminal conditions.
  SystemState state(Eigen::VectorXd::Zero(kStatesPerMachine * ng));
  std::vector<Complex> pf_current(static_cast<std::size_t>(ng));
  for (Eigen::Index i = 0; i < ng; ++i) {
    const Generator& gen = net.generator(y.gen_order[static_cast<std::size_t>(i)]);
    const GeneratorParams& p = gen.params;
    const Bus& bus = net.bus(gen.bus_id);
    const Complex vt = std::polar(bus.voltage_magnitude, bus.voltage_angle);
    const Complex current = std::conj(Complex(gen.dispatch_p, gen.dispatch_q) / vt);
    // The stator network uses xd' on both axes; the q-axis EMF location then
    // needs xq - xq' + xd' so that E'd = (xq - xq') Iq holds at rest.
    const Complex e_q_axis = vt + Complex(p.ra, p.xq - p.xq_p + p.xd_p) * current;
    const double delta = std::arg(e_q_axis);
    const Complex to_machine = std::exp(-j * (delta - pi / 2.0));
    const Complex e_p = (vt + Complex(p.ra, p.xd_p) * current) * to_machine;

    MachineState m;
    m.delta = delta;
    m.ed_p = e_p.real();
    m.eq_p = e_p.imag();
    m.omega = 1.0;
    state.set_machine(i, m);
    pf_current[static_cast<std::size_t>(i)] = current * to_machine;
  }

  // Remaining states use the currents the network actually delivers, so the
  // flux, exciter and swing rows are exactly at rest.
  const MachineCurrents cur = machine_currents(state.vector(), y, u);
  for (Eigen::Index i = 0; i < ng; ++i) {
    const int gen_id = y.gen_order[static_cast<std::size_t>(i)];
    const GeneratorParams& p = net.generator(gen_id).params;
    const Complex pf = pf_current[static_cast<std::size_t>(i)];
    const double mismatch = std::abs(pf - Complex(cur.id[i], cur.iq[i]));
    if (!(mismatch < 1e-6)) {
      throw NumericalError(
          "generator " + std::to_string(gen_id) +
          ": dispatch is inconsistent with the network (current mismatch " +
          std::to_string(mismatch) + " p.u.); is the power flow solved?");
    }
    MachineState m = state.machine(i);
    const double id = cur.id[i];
    const double iq = cur.iq[i];
    m.efd = m.eq_p + (p.xd - p.xd_p) * id;
    m.vr = (p.ke + p.ae * std::exp(p.be * m.efd)) * m.efd;
    m.rf = p.kf / p.tf * m.efd;
    const double pe = m.ed_p * id + m.eq_p * iq;
    m.pm = pe;
    m.pgv = pe;
    u.p_ref[i] = pe;
    u.v_ref[i] = terminal_voltage(m.ed_p, m.eq_p, id, iq, p) + m.vr / p.ka;
    state.set_machine(i, m);
    const Eigen::VectorXd block =
        state.vector().segment(kStatesPerMachine * i, kStatesPerMachine);
    if (!block.allFinite() || !std::isfinite(u.v_ref[i])) {
      throw NumericalError("generator " + std::to_string(gen_id) +
                           ": equilibrium back-solve produced non-finite values");
    }
  }
  return {std::move(state), std::move(u)};
}

}  // namespace amr
