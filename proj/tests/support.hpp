#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the production code paths they are compared against.

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "amr/dynamics.hpp"
#include "amr/netmodel.hpp"

namespace amr::test {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(AMR_DATA_DIR) / name;
}

inline const BusNetwork& six_machine() {
  static const BusNetwork net = load_network(data_path("six_machine.json"));
  return net;
}

inline const BusNetwork& two_area() {
  static const BusNetwork net = load_network(data_path("two_area.json"));
  return net;
}

template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// --- Network ----------------------------------------------------------------

struct NodeLess {
  bool operator()(const Node& a, const Node& b) const {
    return std::pair(static_cast<int>(a.kind), a.id) <
           std::pair(static_cast<int>(b.kind), b.id);
  }
};

struct NodePairLess {
  bool operator()(const std::pair<Node, Node>& a,
                  const std::pair<Node, Node>& b) const {
    const NodeLess less;
    if (less(a.first, b.first)) return true;
    if (less(b.first, a.first)) return false;
    return less(a.second, b.second);
  }
};

using Triplets = std::map<std::pair<Node, Node>, Complex, NodePairLess>;

/// Element-by-element stamp of the whole-network admittance: branch pi
/// models, constant-impedance loads, machines behind ra + j xd'.
inline Triplets stamp_admittance(const BusNetwork& net,
                                 const std::optional<FaultSpec>& fault = {}) {
  Triplets t;
  auto add = [&](Node a, Node b, Complex v) { t[{a, b}] += v; };
  auto bus = [](int id) { return Node{NodeKind::kBus, id}; };
  for (const Branch& br : net.branches) {
    if (!br.in_service) continue;
    const Complex ys = 1.0 / Complex(br.resistance, br.reactance);
    const Complex ysh(0.0, br.shunt_susceptance / 2.0);
    add(bus(br.from_bus), bus(br.from_bus), ys + ysh);
    add(bus(br.to_bus), bus(br.to_bus), ys + ysh);
    add(bus(br.from_bus), bus(br.to_bus), -ys);
    add(bus(br.to_bus), bus(br.from_bus), -ys);
  }
  for (const Bus& b : net.buses) {
    const double v2 = b.voltage_magnitude * b.voltage_magnitude;
    add(bus(b.id), bus(b.id), Complex(b.load_p, -b.load_q) / v2);
  }
  for (const Generator& g : net.generators) {
    const Complex y = 1.0 / Complex(g.params.ra, g.params.xd_p);
    const Node in{NodeKind::kInternal, g.id};
    add(in, in, y);
    add(bus(g.bus_id), bus(g.bus_id), y);
    add(in, bus(g.bus_id), -y);
    add(bus(g.bus_id), in, -y);
  }
  if (fault) add(bus(fault->bus_id), bus(fault->bus_id), fault->shunt);
  return t;
}

/// Y_kk - Y_ke Y_ee^-1 Y_ek assembled one column at a time from separate
/// linear solves.
inline Eigen::MatrixXcd kron_by_columns(const Eigen::MatrixXcd& y,
                                        const std::vector<int>& keep) {
  std::vector<int> elim;
  for (int i = 0; i < y.rows(); ++i) {
    if (std::find(keep.begin(), keep.end(), i) == keep.end()) elim.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(keep.size());
  const auto e = static_cast<Eigen::Index>(elim.size());
  Eigen::MatrixXcd yee(e, e);
  for (Eigen::Index a = 0; a < e; ++a) {
    for (Eigen::Index b = 0; b < e; ++b) yee(a, b) = y(elim[a], elim[b]);
  }
  const Eigen::FullPivLU<Eigen::MatrixXcd> lu(yee);
  Eigen::MatrixXcd out(k, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXcd rhs(e);
    for (Eigen::Index a = 0; a < e; ++a) rhs[a] = y(elim[a], keep[c]);
    const Eigen::VectorXcd z = lu.solve(rhs);
    for (Eigen::Index r = 0; r < k; ++r) {
      Complex s = y(keep[r], keep[c]);
      for (Eigen::Index a = 0; a < e; ++a) s -= y(keep[r], elim[a]) * z[a];
      out(r, c) = s;
    }
  }
  return out;
}

// --- Machine model ----------------------------------------------------------

/// Stator currents from network phasors: E_j = (E'd + jE'q) e^{j(delta - pi/2)},
/// I = Y11 E + Y12 V, rotated back into each machine's d-q frame.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> phasor_currents(
    const Eigen::VectorXd& x, const ReducedYMatrix& y, const BoundaryInput& u) {
  const Eigen::Index ng = y.num_generators();
  const Complex j(0.0, 1.0);
  Eigen::VectorXcd e(ng);
  for (Eigen::Index i = 0; i < ng; ++i) {
    const double* m = x.data() + kStatesPerMachine * i;
    e[i] = Complex(m[kEdp], m[kEqp]) *
           std::exp(j * (m[kDelta] - std::numbers::pi / 2));
  }
  Eigen::VectorXcd cur = y.y11 * e;
  if (y.num_boundary() > 0) {
    Eigen::VectorXcd v(y.num_boundary());
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      v[k] = std::polar(u.v[k], u.theta[k]);
    }
    cur += y.y12 * v;
  }
  Eigen::VectorXd id(ng), iq(ng);
  for (Eigen::Index i = 0; i < ng; ++i) {
    const double delta = x[kStatesPerMachine * i + kDelta];
    const Complex dq = cur[i] * std::exp(-j * (delta - std::numbers::pi / 2));
    id[i] = dq.real();
    iq[i] = dq.imag();
  }
  return {id, iq};
}

/// The nine machine equations written out again from their textbook form,
/// with the terminal voltage taken as |E' - (ra + j xd') I| on phasors.
inline Eigen::VectorXd reference_rhs(const Eigen::VectorXd& x,
                                     const ReducedYMatrix& y,
                                     const BoundaryInput& u,
                                     std::span<const GeneratorParams> params) {
  const auto [id, iq] = phasor_currents(x, y, u);
  const double wb = 120.0 * std::numbers::pi;
  Eigen::VectorXd f(x.size());
  for (Eigen::Index i = 0; i < y.num_generators(); ++i) {
    const GeneratorParams& p = params[static_cast<std::size_t>(i)];
    const double* m = x.data() + 9 * i;
    double* d = f.data() + 9 * i;
    const double pm = m[1], pgv = m[2], vr = m[3], rf = m[4], efd = m[5],
                 ed = m[6], eq = m[7], w = m[8];
    const Complex e_p(ed, eq);
    const Complex i_dq(id[i], iq[i]);
    const double vt = std::abs(e_p - Complex(p.ra, p.xd_p) * i_dq);
    d[0] = wb * (w - 1.0);
    d[1] = (-pm + pgv) / p.tch;
    d[2] = (-pgv + u.p_ref[i] - (w - 1.0) / p.r_gov) / p.tgv;
    d[3] = (-vr + p.ka * rf - p.ka * p.kf / p.tf * efd +
            p.ka * (u.v_ref[i] - vt)) / p.ta;
    d[4] = (-rf + p.kf / p.tf * efd) / p.tf;
    d[5] = (-(p.ke + p.ae * std::exp(p.be * efd)) * efd + vr) / p.te;
    d[6] = (-ed + (p.xq - p.xq_p) * iq[i]) / p.tqo_p;
    d[7] = (-eq - (p.xd - p.xd_p) * id[i] + efd) / p.tdo_p;
    d[8] = (pm - ed * id[i] - eq * iq[i] - p.d * (w - 1.0)) / (2.0 * p.h);
  }
  return f;
}

/// Random state near x0: angles +-0.3 rad, other fields +-10 %, speeds
/// +-1 %.
inline Eigen::VectorXd perturbed_state(const Eigen::VectorXd& x0,
                                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::VectorXd x = x0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    switch (static_cast<int>(k % kStatesPerMachine)) {
      case kDelta: x[k] += 0.3 * unit(rng); break;
      case kOmega: x[k] += 0.01 * unit(rng); break;
      default: x[k] += 0.1 * (std::abs(x[k]) + 0.1) * unit(rng); break;
    }
  }
  return x;
}

/// Central differences of f about x, one column per coordinate.
inline Eigen::MatrixXd central_difference(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += step;
    xm[k] -= step;
    jac.col(k) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return jac;
}

/// Worst entry of |a - b| / max(|b|, 1).
inline double relative_discrepancy(const Eigen::MatrixXd& a,
                                   const Eigen::MatrixXd& b) {
  return ((a - b).array().abs() / b.array().abs().max(1.0)).maxCoeff();
}

}  // namespace amr::test
