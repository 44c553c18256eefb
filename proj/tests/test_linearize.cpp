#include <random>

#include "amr/errors.hpp"
#include "amr/linearize.hpp"
#include "amr/mor.hpp"
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

Fixture at_equilibrium(const BusNetwork& net, std::optional<Area> which) {
  Fixture a;
  a.y = which ? area_admittance(net, *which) : whole_system_admittance(net);
  a.params = params_for(net, a.y);
  auto [state, u] = init_equilibrium(net, a.y);
  a.x0 = state.vector();
  a.u0 = u;
  return a;
}

bool hurwitz(const Eigen::MatrixXd& a) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(a).eigenvalues().real().maxCoeff() < 0.0;
}

}  // namespace

TEST_SUITE("linearize") {
  TEST_CASE("angle and mechanical-power rows have their closed form") {
    const Fixture f = at_equilibrium(test::six_machine(), Area::kStudy);
    const LinearModel lin = linearize(f.x0, f.u0, f.y, f.params);
    for (Eigen::Index i = 0; i < f.y.num_generators(); ++i) {
      const GeneratorParams& p = f.params[static_cast<std::size_t>(i)];
      Eigen::RowVectorXd delta_row = Eigen::RowVectorXd::Zero(lin.a.cols());
      delta_row[9 * i + kOmega] = kOmegaBase;
      CHECK(max_abs(lin.a.row(9 * i + kDelta) - delta_row) == 0.0);
      Eigen::RowVectorXd pm_row = Eigen::RowVectorXd::Zero(lin.a.cols());
      pm_row[9 * i + kPm] = -1.0 / p.tch;
      pm_row[9 * i + kPgv] = 1.0 / p.tch;
      CHECK(max_abs(lin.a.row(9 * i + kPm) - pm_row) < 1e-15);
    }
  }

  TEST_CASE("boundary inputs only reach rows that see the network") {
    const Fixture f = at_equilibrium(test::six_machine(), Area::kExternal);
    const LinearModel lin = linearize(f.x0, f.u0, f.y, f.params);
    REQUIRE(lin.b.cols() == 2 * f.y.num_boundary());
    for (Eigen::Index i = 0; i < f.y.num_generators(); ++i) {
      for (int field : {kDelta, kPm, kPgv, kRf, kEfd}) {
        CHECK(max_abs(lin.b.row(9 * i + field)) == 0.0);
      }
    }
    CHECK(max_abs(lin.b) > 0.0);
    CHECK(max_abs(lin.f0) < 1e-8);
    CHECK(lin.c.isIdentity());
  }

  TEST_CASE("a system without boundary has an empty input matrix") {
    const Fixture f = at_equilibrium(test::six_machine(), std::nullopt);
    const LinearModel lin = linearize(f.x0, f.u0, f.y, f.params);
    CHECK(lin.b.rows() == lin.a.rows());
    CHECK(lin.b.cols() == 0);
  }

  TEST_CASE("Jacobians agree with central differences of the vector field") {
    std::mt19937_64 rng(17);
    for (Area which : {Area::kStudy, Area::kExternal}) {
      const Fixture f = at_equilibrium(test::six_machine(), which);
      for (int trial = 0; trial < 5; ++trial) {
        const Eigen::VectorXd x = test::perturbed_state(f.x0, rng);
        const Eigen::MatrixXd a = jacobian_a(x, f.u0, f.y, f.params);
        const Eigen::MatrixXd fd_a = test::central_difference(
            [&](const Eigen::VectorXd& s) {
              return test::reference_rhs(s, f.y, f.u0, f.params);
            },
            x, 1e-6);
        CHECK(test::relative_discrepancy(a, fd_a) < 1e-6);

        const Eigen::MatrixXd b = jacobian_b(x, f.u0, f.y, f.params);
        const Eigen::MatrixXd fd_b = test::central_difference(
            [&](const Eigen::VectorXd& uv) {
              BoundaryInput u = f.u0;
              u.set_from_vector(uv);
              return test::reference_rhs(x, f.y, u, f.params);
            },
            f.u0.as_vector(), 1e-6);
        CHECK(test::relative_discrepancy(b, fd_b) < 1e-6);
      }
    }
  }

  TEST_CASE("external areas are asymptotically stable at equilibrium") {
    for (const BusNetwork* net : {&test::six_machine(), &test::two_area()}) {
      const Fixture f = at_equilibrium(*net, Area::kExternal);
      CHECK(hurwitz(jacobian_a(f.x0, f.u0, f.y, f.params)));
    }
  }

  TEST_CASE("operating point: an equilibrium needs no iterations") {
    const Fixture f = at_equilibrium(test::six_machine(), Area::kExternal);
    const OperatingPoint op = find_operating_point(f.x0, f.u0, f.y, f.params);
    CHECK(op.iterations == 0);
    CHECK(op.drift == 0.0);
    CHECK(max_abs(op.x - f.x0) == 0.0);
  }

  TEST_CASE("operating point: an area with held inputs returns to its equilibrium") {
    const Fixture f = at_equilibrium(test::two_area(), Area::kExternal);
    std::mt19937_64 rng(3);
    Eigen::VectorXd guess = f.x0;
    for (Eigen::Index k = 0; k < guess.size(); ++k) {
      guess[k] += 0.01 * std::uniform_real_distribution<double>(-1, 1)(rng) *
                  (std::abs(guess[k]) + 0.1);
    }
    const OperatingPoint op = find_operating_point(guess, f.u0, f.y, f.params);
    CHECK(op.iterations > 0);
    CHECK(max_abs(op.x - f.x0) < 1e-8);
    CHECK(max_abs(rhs_full(op.x, f.y, f.u0, f.params)) < 1e-10);
  }

  TEST_CASE("operating point: a whole system settles at a rotated equilibrium") {
    const Fixture f = at_equilibrium(test::six_machine(), std::nullopt);
    std::mt19937_64 rng(8);
    Eigen::VectorXd guess = f.x0;
    for (Eigen::Index k = 0; k < guess.size(); ++k) {
      guess[k] += 0.01 * std::uniform_real_distribution<double>(-1, 1)(rng) *
                  (std::abs(guess[k]) + 0.1);
    }
    const OperatingPoint op = find_operating_point(guess, f.u0, f.y, f.params);
    CHECK(op.x[kDelta] == guess[kDelta]);
    // Generation matches load at nominal speed, so the equilibrium is the
    // original one shifted by a common angle.
    CHECK(std::abs(op.drift) < 1e-8);
    const double shift = guess[kDelta] - f.x0[kDelta];
    Eigen::VectorXd rotated = f.x0;
    for (Eigen::Index i = 0; i < f.y.num_generators(); ++i) {
      rotated[9 * i + kDelta] += shift;
    }
    CHECK(max_abs(op.x - rotated) < 1e-8);
  }

  TEST_CASE("operating point: failure is reported") {
    const Fixture f = at_equilibrium(test::six_machine(), Area::kExternal);
    Eigen::VectorXd guess = f.x0;
    guess[kEqp] += 5.0;
    CHECK_THROWS_AS(find_operating_point(guess, f.u0, f.y, f.params, 1e-10, 0),
                    NumericalError);
  }

  TEST_CASE("re-expansion about the operating point reproduces linearize") {
    const Fixture f = at_equilibrium(test::two_area(), Area::kExternal);
    const OperatingPoint op = find_operating_point(f.x0, f.u0, f.y, f.params);
    const LinearModel a = linearize_about(op, f.x0, f.u0, f.y, f.params);
    const LinearModel b = linearize(f.x0, f.u0, f.y, f.params);
    CHECK(max_abs(a.a - b.a) == 0.0);
    CHECK(max_abs(a.b - b.b) == 0.0);
    CHECK(max_abs(a.f0 - b.f0) < 1e-12);

    const BalancedReduction ra = reduce_linear(a, 1e-5);
    const BalancedReduction rb = reduce_linear(b, 1e-5);
    CHECK(ra.r == rb.r);
    CHECK(max_abs(ra.hankel - rb.hankel) < 1e-10);
  }

  TEST_CASE("re-expansion is first-order exact away from the operating point") {
    const Fixture f = at_equilibrium(test::six_machine(), Area::kStudy);
    const OperatingPoint op = find_operating_point(f.x0, f.u0, f.y, f.params);
    std::mt19937_64 rng(2);
    const Eigen::VectorXd x_dev = test::perturbed_state(f.x0, rng);
    const LinearModel lin = linearize_about(op, x_dev, f.u0, f.y, f.params);
    CHECK(max_abs(lin.x0 - x_dev) == 0.0);
    // The affine model evaluated at op gives f(op) = 0.
    const Eigen::VectorXd at_op = lin.f0 + lin.a * (op.x - x_dev);
    CHECK(max_abs(at_op) < 1e-10);
  }

  TEST_CASE("after a line trip the area settles to a new stable operating point") {
    const BusNetwork& net = test::two_area();
    const Fixture before = at_equilibrium(net, Area::kExternal);
    // First in-service branch internal to the external area whose removal
    // keeps the network connected is found by trying each in turn.
    const PartitionSpec& part = *net.partition;
    int tripped = 0;
    for (const Branch& br : net.branches) {
      if (!part.external_buses.contains(br.from_bus) ||
          !part.external_buses.contains(br.to_bus)) {
        continue;
      }
      try {
        const BusNetwork after_net = trip_line(net, br.id);
        const ReducedYMatrix y = area_admittance(after_net, Area::kExternal);
        const OperatingPoint op =
            find_operating_point(before.x0, before.u0, y, before.params);
        CHECK(max_abs(rhs_full(op.x, y, before.u0, before.params)) < 1e-10);
        CHECK(hurwitz(jacobian_a(op.x, before.u0, y, before.params)));
        CHECK(max_abs(op.x - before.x0) > 1e-6);
        tripped = br.id;
        break;
      } catch (const NumericalError&) {
        continue;
      }
    }
    CHECK(tripped != 0);
  }
}
