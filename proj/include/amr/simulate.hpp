#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "amr/dynamics.hpp"
#include "amr/netmodel.hpp"
#include "amr/switching.hpp"

namespace amr {

/// Classical RK4 step. Throws NumericalError (with step_index when given)
/// if any stage derivative is non-finite.
Eigen::VectorXd step_rk4(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& rhs,
    const Eigen::VectorXd& x, double h, long step_index = -1);

/// RK4 applied to x' = A x + c with c constant over the step, in closed form:
/// x+ = phi x + gamma c. gamma_inputs holds gamma times the columns passed to
/// rk4_propagator (gamma itself when none are given).
struct Rk4Propagator {
  Eigen::MatrixXd phi;
  Eigen::MatrixXd gamma_inputs;
};
Rk4Propagator rk4_propagator(const Eigen::MatrixXd& a, double h);
Rk4Propagator rk4_propagator(const Eigen::MatrixXd& a, double h,
                             const Eigen::MatrixXd& inputs);

enum class Policy {
  kFullOnly,               // whole network, full model throughout
  kLinearOnly,             // partitioned, external area always linear-reduced
  kAdaptivePartitioned,    // partitioned, external area switches modes
  kAdaptiveUnpartitioned,  // whole network, whole system switches modes
  kPartitionedFull,        // partitioned, both areas full (co-simulation)
};

std::string to_string(Policy p);
/// Accepts the snake_case names (full_only, linear_only, ...).
Policy parse_policy(std::string_view s);
bool is_partitioned(Policy p);

enum class PostAction { kNone, kTripLine, kTripBus };

std::string to_string(PostAction a);
PostAction parse_post_action(std::string_view s);

struct FaultEvent {
  int bus_id = 0;
  double t_on = 0.1;     // s
  double t_clear = 0.2;  // s
  PostAction post_action = PostAction::kNone;
  int trip_branch = 0;  // branch id for kTripLine
  Complex shunt = kDefaultFaultShunt;
};

inline constexpr double kDegree = std::numbers::pi / 180.0;
inline constexpr double kDefaultDeltaMaxPartitioned = 67.0 * kDegree;
inline constexpr double kDefaultDeltaMaxUnpartitioned = 6.0 * kDegree;

struct AdaptiveOptions {
  double threshold_pu = 1.0;        // column-norm threshold
  std::optional<double> delta_max;  // rad; policy default when unset
  double t_th_max = 1.0;            // s
  double hankel_tol = 1e-5;
};

struct SimConfig {
  double step = 0.01;
  double duration = 16.0;
  std::optional<FaultEvent> fault;
  Policy policy = Policy::kFullOnly;
  AdaptiveOptions adaptive;
  bool stop_on_instability = true;
  // Restart from a physical state (network generator order) at start_step.
  std::optional<Eigen::VectorXd> initial_state;
  long start_step = 0;
};

/// Throws ValidationError when cfg cannot be run on net.
void validate(const SimConfig& cfg, const BusNetwork& net);

struct SwitchEvent {
  double time = 0.0;
  Mode from = Mode::kFull;
  Mode to = Mode::kFull;
  double continuity_error = 0.0;
};

using StateMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Trajectory {
  std::vector<int> gen_order;  // network generator order
  std::vector<double> times;
  StateMatrix states;          // times.size() x 9 Ng, physical coordinates
  std::vector<Mode> mode_log;  // model used over each step (times.size() - 1)
  std::vector<double> delta_dev;  // switching input per step (rad), NaN if unused
  std::vector<double> relinearization_events;
  // Largest state jump caused by each re-linearization (same order as the
  // events): the physical state before minus its re-expansion after.
  std::vector<double> relinearization_continuity;
  std::vector<double> relinearization_failures;
  std::vector<SwitchEvent> switches;
  bool stable = true;
  double instability_time = std::numeric_limits<double>::quiet_NaN();

  Eigen::Index num_samples() const { return states.rows(); }
  /// Column of a machine field in states.
  Eigen::Index column(int gen_id, int field) const;
};

/// Instability verdict on one physical sample: a speed excursion above
/// 0.5 p.u. or a pole slip (relative angle swing wider than 2 pi).
bool is_unstable_sample(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& x_start);

/// Offline preparation (network reductions, initial linearization and
/// balanced reduction) is done in the constructor; run() only integrates, so
/// it can be timed on its own and repeated.
class Simulator {
 public:
  Simulator(const BusNetwork& net, SimConfig cfg);
  ~Simulator();
  Simulator(Simulator&&) noexcept;
  Simulator& operator=(Simulator&&) noexcept;

  Trajectory run() const;

  const SimConfig& config() const { return cfg_; }
  /// Equilibrium in network generator order.
  const Eigen::VectorXd& initial_state() const;
  /// Retained order of the initial external reduction (0 if none).
  Eigen::Index reduced_order() const;
  /// Hankel values of the initial external reduction (empty if none).
  const Eigen::VectorXd& hankel_values() const;
  /// Generators kept nonlinear by the column-norm test (adaptive policies).
  std::vector<int> nonlinear_generators() const;
  int reference_generator() const;

  struct Prepared;

 private:
  SimConfig cfg_;
  std::unique_ptr<Prepared> prep_;
};

Trajectory run_simulation(const BusNetwork& net, const SimConfig& cfg);

}  // namespace amr
