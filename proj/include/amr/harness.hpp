#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amr/netmodel.hpp"
#include "amr/simulate.hpp"

namespace amr {

// --- Error metrics ----------------------------------------------------------

/// Root mean square difference of one state column over all samples, in the
/// column's own units. Throws DimensionError when the time grids differ.
double rmse(const Trajectory& ref, const Trajectory& test,
            Eigen::Index column);

/// Same for one machine field; rotor angles are returned in degrees.
double rmse_state(const Trajectory& ref, const Trajectory& test, int gen_id,
                  int field);

/// Per-generator, per-field RMSE (rows follow ref.gen_order, columns the
/// field index; degrees in the delta column).
struct RmseTable {
  std::vector<int> gen_order;
  Eigen::MatrixXd values;
};
RmseTable rmse_table(const Trajectory& ref, const Trajectory& test);

struct WorstGenerator {
  int gen_id = -1;
  double rmse_deg = 0.0;
};
/// Generator among `gens` with the largest rotor-angle RMSE.
WorstGenerator worst_generator(const Trajectory& ref, const Trajectory& test,
                               const std::vector<int>& gens);

// --- Critical clearing time -------------------------------------------------

/// A fault of the given duration at `bus`, switched on at t_on.
FaultEvent fault_with_duration(const FaultEvent& shape, double duration);

struct CctResult {
  double cct = 0.0;   // longest stable fault duration (s)
  long steps = 0;     // same, in integration steps
  int runs = 0;
};

/// Bisection over whole integration steps of fault duration. `base` supplies
/// the policy, step, horizon and post-fault action; its fault shape gives
/// t_on (bus_id is overridden). Throws ValidationError when [lo, hi] does not
/// straddle the stability boundary.
CctResult find_cct(const BusNetwork& net, int bus_id, const SimConfig& base,
                   double lo, double hi);

/// True if the run completes without an instability verdict.
bool is_stable(const BusNetwork& net, const SimConfig& cfg);

// --- Sweeps -----------------------------------------------------------------

struct SweepPoint {
  double value = 0.0;
  double error_deg = 0.0;
};

struct SweepResult {
  double chosen = 0.0;
  double error_deg = 0.0;
  bool met = false;              // false: no value met the limit; best shown
  std::vector<SweepPoint> trace;  // every value tried, in sweep order
  int simulations = 0;           // runs actually integrated (memo misses)
};

struct SweepOptions {
  double start = 10.0;
  double step = 0.1;
  double stop = 0.0;
  double error_limit_deg = 6.0;
  SimConfig base;  // step, horizon and adaptive defaults for every run
};

/// Full-model reference trajectories for a set of faults, one per fault.
std::vector<Trajectory> reference_runs(const BusNetwork& net,
                                       const std::vector<FaultEvent>& faults,
                                       const SimConfig& base);

/// Worst study-generator rotor-angle RMSE over all faults (degrees);
/// +inf when a run blows up or ends early.
double max_fault_error(const BusNetwork& net,
                       const std::vector<FaultEvent>& faults,
                       const std::vector<Trajectory>& refs,
                       const SimConfig& cfg);

/// Column-norm threshold sweep, descending from opts.start (p.u.). Each
/// candidate runs the partitioned adaptive policy with the angle trigger at
/// zero (the hybrid model is used for the whole post-fault period) and no
/// re-linearization. Thresholds giving the same nonlinear set share a run.
SweepResult threshold_sweep(const BusNetwork& net,
                            const std::vector<FaultEvent>& faults,
                            const SweepOptions& opts);

/// Angle-trigger sweep in degrees, descending, for a fixed threshold in
/// opts.base.adaptive. Runs are shared across trigger values that produce
/// the same switching decisions.
SweepResult delta_max_sweep(const BusNetwork& net,
                            const std::vector<FaultEvent>& faults,
                            const SweepOptions& opts);

// --- Timing -----------------------------------------------------------------

struct Timing {
  double median = 0.0;          // s
  std::vector<double> samples;  // s
};

/// Wall-clock of Simulator::run() (offline preparation excluded), median of
/// `repeats` runs on a monotonic clock.
Timing time_run(const Simulator& sim, int repeats = 5);

/// "<value>pu" or "<value>S" (siemens at 20 kV on the network's base) to
/// p.u. A bare number is rejected. Throws ValidationError.
double parse_threshold(const std::string& text, double base_mva);

// --- Scenarios --------------------------------------------------------------

struct Scenario {
  std::string id = "scenario";
  std::optional<std::filesystem::path> network;
  SimConfig base;
  std::optional<std::string> threshold;  // resolved against the network base
  std::vector<Policy> policies;
  int timing_repeats = 5;
  bool write_trajectories = true;
};

/// Fault objects {"bus", "t_on", "t_clear", "post_action", "trip_branch"},
/// either as a bare array or under a "faults" key.
std::vector<FaultEvent> parse_faults(const std::string& text);
std::vector<FaultEvent> load_faults(const std::filesystem::path& path);

/// Parses a scenario JSON document. Relative network paths resolve against
/// `origin`. Throws ParseError / ValidationError.
Scenario parse_scenario(const std::string& text,
                        const std::filesystem::path& origin = {});
Scenario load_scenario(const std::filesystem::path& path);

struct PolicyReport {
  Policy policy = Policy::kFullOnly;
  RmseTable rmse;
  WorstGenerator worst;
  Timing timing;
  double speedup = 1.0;  // full_only median / this median
  bool stable = true;
  std::size_t relinearizations = 0;
  std::size_t relinearization_failures = 0;
  Eigen::Index reduced_order = 0;
  std::vector<int> nonlinear_generators;
  Trajectory trajectory;
};

struct ScenarioReport {
  std::string id;
  Timing reference_timing;
  std::vector<PolicyReport> policies;

  const PolicyReport& at(Policy p) const;
};

/// Runs full_only as the reference plus every requested policy, and (if
/// out_dir is set) writes report.json, per-policy trajectory CSV and sidecar
/// JSON, and a whitespace-separated rotor-angle file for plotting.
ScenarioReport run_scenario(const BusNetwork& net, const Scenario& sc,
                            const std::optional<std::filesystem::path>& out_dir);

std::string report_json(const ScenarioReport& rep);

}  // namespace amr
