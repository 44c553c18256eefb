#pragma once

#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "amr/generator_params.hpp"
#include "amr/netmodel.hpp"

namespace amr {

inline constexpr int kStatesPerMachine = 9;
inline constexpr double kOmegaBase = 120.0 * std::numbers::pi;  // rad/s

// Field order inside one machine's block of the stacked state vector.
// Global index = 9 * machine + field.
enum StateField : int {
  kDelta = 0,
  kPm = 1,
  kPgv = 2,
  kVr = 3,
  kRf = 4,
  kEfd = 5,
  kEdp = 6,
  kEqp = 7,
  kOmega = 8,
};

/// True for the rows whose right-hand side is nonlinear in the states
/// (Efd, E'd, E'q and omega). The VR row is treated as linear.
constexpr bool is_nonlinear_row(int field) {
  return field == kEfd || field == kEdp || field == kEqp || field == kOmega;
}

struct MachineState {
  double delta = 0.0;
  double pm = 0.0;
  double pgv = 0.0;
  double vr = 0.0;
  double rf = 0.0;
  double efd = 0.0;
  double ed_p = 0.0;
  double eq_p = 0.0;
  double omega = 1.0;
};

/// Stacked machine states, 9 per machine in the StateField order.
class SystemState {
 public:
  SystemState() = default;
  explicit SystemState(Eigen::VectorXd x) : x_(std::move(x)) {}
  explicit SystemState(std::span<const MachineState> machines);

  Eigen::Index num_machines() const { return x_.size() / kStatesPerMachine; }
  MachineState machine(Eigen::Index i) const;
  void set_machine(Eigen::Index i, const MachineState& m);

  const Eigen::VectorXd& vector() const { return x_; }
  Eigen::VectorXd& vector() { return x_; }

 private:
  Eigen::VectorXd x_;
};

/// Boundary-bus phasors seen by an area (one entry per fictitious node) plus
/// the constant per-machine setpoints fixed at initialization.
struct BoundaryInput {
  Eigen::VectorXd theta;  // rad
  Eigen::VectorXd v;      // p.u.
  Eigen::VectorXd p_ref;  // per machine
  Eigen::VectorXd v_ref;  // per machine

  Eigen::Index num_boundary() const { return theta.size(); }
  /// u = (theta, V), length 2 * Nb.
  Eigen::VectorXd as_vector() const;
  void set_from_vector(const Eigen::Ref<const Eigen::VectorXd>& u);
};

struct MachineCurrents {
  Eigen::VectorXd id;
  Eigen::VectorXd iq;
};

/// Machine-frame stator currents from the generator, generator-generator and
/// generator-boundary sums, term by term.
MachineCurrents machine_currents(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const ReducedYMatrix& y,
                                 const BoundaryInput& u);

/// Current of a single machine; same sums as machine_currents().
void machine_current(const Eigen::Ref<const Eigen::VectorXd>& x,
                     const ReducedYMatrix& y, const BoundaryInput& u,
                     Eigen::Index i, double& id, double& iq);

/// Terminal voltage magnitude E' - (ra + j xd') I in the machine frame.
double terminal_voltage(double ed_p, double eq_p, double id, double iq,
                        const GeneratorParams& p);

/// The nine derivatives of one machine given its currents.
void machine_rhs(const double* xm, double id, double iq,
                 const GeneratorParams& p, double p_ref, double v_ref,
                 double* dxm);

/// Full nonlinear vector field of an area (or of the whole system when y has
/// no boundary nodes). Throws DimensionError on inconsistent sizes.
Eigen::VectorXd rhs_full(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const ReducedYMatrix& y, const BoundaryInput& u,
                         std::span<const GeneratorParams> params);

void rhs_full_into(const Eigen::Ref<const Eigen::VectorXd>& x,
                   const ReducedYMatrix& y, const BoundaryInput& u,
                   std::span<const GeneratorParams> params,
                   Eigen::Ref<Eigen::VectorXd> dx);

/// Parameters of y.gen_order's generators, in that order.
std::vector<GeneratorParams> params_for(const BusNetwork& net,
                                        const ReducedYMatrix& y);

/// Equilibrium from the solved power flow stored in net: two-axis
/// initialization from terminal conditions, Pref/Vref back-solved so every
/// derivative vanishes. Boundary phasors come from the far-end buses.
/// Throws NumericalError naming a machine whose operating point cannot be
/// matched (non-finite values, or network currents that disagree with the
/// power-flow dispatch).
std::pair<SystemState, BoundaryInput> init_equilibrium(
    const BusNetwork& net, const ReducedYMatrix& y);

void check_dimensions(Eigen::Index x_size, const ReducedYMatrix& y,
                      const BoundaryInput& u, std::size_t num_params);

}  // namespace amr
