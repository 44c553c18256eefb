#include <random>

#include "amr/dynamics.hpp"
#include "amr/errors.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace amr;
using amr::test::max_abs;

namespace {

struct Fixture {
  ReducedYMatrix y;
  std::vector<GeneratorParams> params;
  Eigen::VectorXd x0;
  BoundaryInput u0;
};

Fixture area_at_equilibrium(const BusNetwork& net, Area which) {
  Fixture a;
  a.y = area_admittance(net, which);
  a.params = params_for(net, a.y);
  auto [state, u] = init_equilibrium(net, a.y);
  a.x0 = state.vector();
  a.u0 = u;
  return a;
}

Fixture whole_at_equilibrium(const BusNetwork& net) {
  Fixture a;
  a.y = whole_system_admittance(net);
  a.params = params_for(net, a.y);
  auto [state, u] = init_equilibrium(net, a.y);
  a.x0 = state.vector();
  a.u0 = u;
  return a;
}

ReducedYMatrix single_node(Complex y11, int machines = 1) {
  ReducedYMatrix y;
  y.y11 = Eigen::MatrixXcd::Constant(machines, machines, y11);
  if (machines == 2) y.y11(0, 1) = y.y11(1, 0) = -0.4 * y11;
  y.y12.resize(machines, 0);
  y.y21.resize(0, machines);
  y.y22.resize(0, 0);
  for (int i = 0; i < machines; ++i) y.gen_order.push_back(i + 1);
  return y;
}

BoundaryInput no_boundary(int machines) {
  BoundaryInput u;
  u.theta.resize(0);
  u.v.resize(0);
  u.p_ref = Eigen::VectorXd::Zero(machines);
  u.v_ref = Eigen::VectorXd::Ones(machines);
  return u;
}

}  // namespace

TEST_SUITE("dynamics") {
  TEST_CASE("single machine currents reduce to -B E'q and G E'q") {
    const double g = 0.3, b = -3.2;
    const ReducedYMatrix y = single_node(Complex(g, b));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(9);
    x[kDelta] = 0.7;
    x[kEqp] = 1.1;
    const MachineCurrents c = machine_currents(x, y, no_boundary(1));
    CHECK(c.id[0] == doctest::Approx(-b * 1.1).epsilon(1e-15));
    CHECK(c.iq[0] == doctest::Approx(g * 1.1).epsilon(1e-15));
  }

  TEST_CASE("identical machines at equal angles draw identical currents") {
    const ReducedYMatrix y = single_node(Complex(0.2, -2.5), 2);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(18);
    for (int i = 0; i < 2; ++i) {
      x[9 * i + kDelta] = 0.4;
      x[9 * i + kEdp] = 0.2;
      x[9 * i + kEqp] = 0.9;
    }
    const MachineCurrents c = machine_currents(x, y, no_boundary(2));
    CHECK(c.id[0] == c.id[1]);
    CHECK(c.iq[0] == c.iq[1]);
  }

  TEST_CASE("currents match a network-phasor computation on random states") {
    std::mt19937_64 rng(11);
    for (Area which : {Area::kStudy, Area::kExternal}) {
      const Fixture a = area_at_equilibrium(test::six_machine(), which);
      for (int trial = 0; trial < 5; ++trial) {
        const Eigen::VectorXd x = test::perturbed_state(a.x0, rng);
        const MachineCurrents c = machine_currents(x, a.y, a.u0);
        const auto [id, iq] = test::phasor_currents(x, a.y, a.u0);
        const double scale = std::max(1.0, max_abs(id) + max_abs(iq));
        CHECK(max_abs(c.id - id) < 1e-14 * scale);
        CHECK(max_abs(c.iq - iq) < 1e-14 * scale);
      }
    }
  }

  TEST_CASE("currents are linear in (E'd, E'q, V) at fixed angles") {
    std::mt19937_64 rng(5);
    const Fixture a = area_at_equilibrium(test::six_machine(), Area::kExternal);
    const Eigen::VectorXd x = test::perturbed_state(a.x0, rng);
    Eigen::VectorXd x2 = x;
    for (Eigen::Index i = 0; i < a.y.num_generators(); ++i) {
      x2[9 * i + kEdp] *= 2.0;
      x2[9 * i + kEqp] *= 2.0;
    }
    BoundaryInput u2 = a.u0;
    u2.v *= 2.0;
    const MachineCurrents c1 = machine_currents(x, a.y, a.u0);
    const MachineCurrents c2 = machine_currents(x2, a.y, u2);
    CHECK(max_abs(c2.id - 2.0 * c1.id) < 1e-13);
    CHECK(max_abs(c2.iq - 2.0 * c1.iq) < 1e-13);
  }

  TEST_CASE("vector field matches an independent re-implementation") {
    std::mt19937_64 rng(21);
    for (Area which : {Area::kStudy, Area::kExternal}) {
      const Fixture a = area_at_equilibrium(test::six_machine(), which);
      for (int trial = 0; trial < 5; ++trial) {
        const Eigen::VectorXd x = test::perturbed_state(a.x0, rng);
        const Eigen::VectorXd f = rhs_full(x, a.y, a.u0, a.params);
        const Eigen::VectorXd ref = test::reference_rhs(x, a.y, a.u0, a.params);
        CHECK(max_abs(f - ref) < 1e-12 * std::max(1.0, max_abs(ref)));
      }
    }
  }

  TEST_CASE("equilibrium: every derivative vanishes") {
    for (const BusNetwork* net : {&test::six_machine(), &test::two_area()}) {
      for (Area which : {Area::kStudy, Area::kExternal}) {
        const Fixture a = area_at_equilibrium(*net, which);
        CHECK(max_abs(rhs_full(a.x0, a.y, a.u0, a.params)) < 1e-8);
      }
      const Fixture w = whole_at_equilibrium(*net);
      CHECK(max_abs(rhs_full(w.x0, w.y, w.u0, w.params)) < 1e-8);
    }
    const BusNetwork two_bus = load_network(test::data_path("two_bus.json"));
    const Fixture w = whole_at_equilibrium(two_bus);
    CHECK(max_abs(rhs_full(w.x0, w.y, w.u0, w.params)) < 1e-8);
  }

  TEST_CASE("speed step of 0.01 gives d(delta)/dt = 120 pi * 0.01") {
    const Fixture a = area_at_equilibrium(test::six_machine(), Area::kStudy);
    Eigen::VectorXd x = a.x0;
    x[kOmega] += 0.01;
    const Eigen::VectorXd f = rhs_full(x, a.y, a.u0, a.params);
    CHECK(f[kDelta] == doctest::Approx(3.7699111843077517).epsilon(1e-14));
  }

  TEST_CASE("unloaded zero-dispatch machine sits at its bus angle") {
    BusNetwork net = load_network(test::data_path("two_bus.json"));
    for (Bus& b : net.buses) {
      b.load_p = b.load_q = 0.0;
      b.voltage_magnitude = 1.0;
      b.voltage_angle = 0.3;
    }
    net.generators[0].dispatch_p = net.generators[0].dispatch_q = 0.0;
    const Fixture w = whole_at_equilibrium(net);
    CHECK(w.x0[kDelta] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(std::abs(w.x0[kEdp]) < 1e-12);
  }

  TEST_CASE("equilibrium agrees with an independent Newton root-finder") {
    // Study area with its boundary held: the equilibrium is isolated.
    const Fixture a = area_at_equilibrium(test::six_machine(), Area::kStudy);
    std::mt19937_64 rng(4);
    Eigen::VectorXd x = a.x0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      x[k] += 0.01 * std::uniform_real_distribution<double>(-1, 1)(rng) *
              (std::abs(x[k]) + 0.1);
    }
    auto f = [&](const Eigen::VectorXd& s) {
      return test::reference_rhs(s, a.y, a.u0, a.params);
    };
    for (int it = 0; it < 30 && max_abs(f(x)) > 1e-13; ++it) {
      const Eigen::MatrixXd j = test::central_difference(f, x, 1e-7);
      x -= j.fullPivLu().solve(f(x));
    }
    CHECK(max_abs(f(x)) < 1e-11);
    CHECK(max_abs(x - a.x0) < 1e-8);
  }

  TEST_CASE("exactly four rows per machine are nonlinear in the states") {
    int count = 0;
    for (int field = 0; field < kStatesPerMachine; ++field) {
      count += is_nonlinear_row(field) ? 1 : 0;
    }
    CHECK(count == 4);

    // Second differences vanish on delta, Pm, Pgv and Rf rows.
    const Fixture a = area_at_equilibrium(test::six_machine(), Area::kExternal);
    std::mt19937_64 rng(9);
    const Eigen::VectorXd x = test::perturbed_state(a.x0, rng);
    const Eigen::VectorXd dir = test::perturbed_state(a.x0, rng) - a.x0;
    const Eigen::VectorXd second = rhs_full(x + dir, a.y, a.u0, a.params) +
                                   rhs_full(x - dir, a.y, a.u0, a.params) -
                                   2.0 * rhs_full(x, a.y, a.u0, a.params);
    for (Eigen::Index i = 0; i < a.y.num_generators(); ++i) {
      for (int field : {kDelta, kPm, kPgv, kRf}) {
        CHECK(std::abs(second[9 * i + field]) < 1e-9);
      }
      for (int field : {kEdp, kEqp, kOmega}) {
        CHECK(std::abs(second[9 * i + field]) > 1e-6);
      }
    }
  }

  TEST_CASE("dimension mismatches are reported") {
    const Fixture a = area_at_equilibrium(test::six_machine(), Area::kStudy);
    const Eigen::VectorXd shorter = a.x0.head(a.x0.size() - 9);
    CHECK_THROWS_AS(rhs_full(shorter, a.y, a.u0, a.params), DimensionError);
    CHECK_THROWS_AS(machine_currents(shorter, a.y, a.u0), DimensionError);
  }
}
