#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "amr/generator_params.hpp"

namespace amr {

using Complex = std::complex<double>;

struct Bus {
  int id = 0;
  double voltage_magnitude = 1.0;  // p.u., from a solved power flow
  double voltage_angle = 0.0;      // rad
  double load_p = 0.0;             // p.u.
  double load_q = 0.0;             // p.u.

  bool operator==(const Bus&) const = default;
};

struct Branch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double resistance = 0.0;
  double reactance = 0.0;
  double shunt_susceptance = 0.0;  // total line charging, split half per end
  bool in_service = true;

  bool operator==(const Branch&) const = default;
};

struct Generator {
  int id = 0;
  int bus_id = 0;
  GeneratorParams params;
  double dispatch_p = 0.0;
  double dispatch_q = 0.0;

  bool operator==(const Generator&) const = default;
};

enum class Area { kStudy, kExternal };

/// Two-area split of the grid. Generator sets and tie-lines are derived from
/// the bus sets by make_partition().
struct PartitionSpec {
  std::set<int> study_generators;
  std::set<int> external_generators;
  std::set<int> study_buses;
  std::set<int> external_buses;
  std::vector<int> tie_lines;  // branch ids, ascending
  std::set<int> study_boundary_buses;
  std::set<int> external_boundary_buses;

  const std::set<int>& buses(Area a) const {
    return a == Area::kStudy ? study_buses : external_buses;
  }
  const std::set<int>& generators(Area a) const {
    return a == Area::kStudy ? study_generators : external_generators;
  }

  bool operator==(const PartitionSpec&) const = default;
};

struct BusNetwork {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::optional<PartitionSpec> partition;

  std::size_t bus_index(int bus_id) const;
  std::size_t branch_index(int branch_id) const;
  std::size_t generator_index(int gen_id) const;
  const Bus& bus(int bus_id) const { return buses[bus_index(bus_id)]; }
  const Branch& branch(int branch_id) const {
    return branches[branch_index(branch_id)];
  }
  const Generator& generator(int gen_id) const {
    return generators[generator_index(gen_id)];
  }

  /// Generator ids of an area in network order.
  std::vector<int> generator_ids(Area a) const;
  std::vector<int> generator_ids() const;

  bool operator==(const BusNetwork&) const = default;
};

/// Checks every BusNetwork invariant; throws ValidationError on the first
/// violation.
void validate(const BusNetwork& net);

/// Builds the partition from the two bus sets. Throws ValidationError if the
/// sets overlap, miss a bus, or a tie-line is not strictly inter-area.
PartitionSpec make_partition(const BusNetwork& net, std::set<int> study_buses,
                             std::set<int> external_buses);

// --- JSON I/O -------------------------------------------------------------

/// Parses and validates a network document. ParseError carries the
/// line/column or the JSON path of the bad field.
BusNetwork parse_network(std::string_view json_text);
BusNetwork load_network(const std::filesystem::path& path);
std::string dump_network(const BusNetwork& net);
void save_network(const BusNetwork& net, const std::filesystem::path& path);

// --- Admittance -----------------------------------------------------------

/// Three-phase bolted fault modeled as a large shunt at the faulted bus.
inline const Complex kDefaultFaultShunt{1e6, -1e6};

struct FaultSpec {
  int bus_id = 0;
  Complex shunt = kDefaultFaultShunt;
};

enum class NodeKind { kBus, kInternal, kFictitious };

// kBus: id is the bus id. kInternal: generator id. kFictitious: tie-line
// branch id (the source sits at the tie-line's far end).
struct Node {
  NodeKind kind = NodeKind::kBus;
  int id = 0;

  bool operator==(const Node&) const = default;
};

std::string to_string(const Node& node);

struct AdmittanceMatrix {
  Eigen::MatrixXcd y;
  std::vector<Node> nodes;

  Eigen::Index index_of(const Node& node) const;
};

/// Bus admittance of the whole network with every generator's internal node
/// appended behind ra + j*xd_p. Loads become constant shunts at the solved
/// voltage. Buses left without any in-service branch or generator are
/// de-energized and omitted.
AdmittanceMatrix build_admittance(const BusNetwork& net,
                                  const std::optional<FaultSpec>& fault = {});

/// Same construction restricted to one area. Each tie-line becomes a
/// fictitious node behind the tie-line's series impedance; the near-end half
/// of the line charging stays on the area's boundary bus.
AdmittanceMatrix build_area_admittance(
    const BusNetwork& net, Area area,
    const std::optional<FaultSpec>& fault = {});

struct AppliedFault {
  Eigen::Index node = -1;
  Complex saved_diagonal;
};

/// Adds `shunt` at the bus; remove_fault() restores the saved entry exactly.
AppliedFault apply_fault(AdmittanceMatrix& y, int bus_id,
                         Complex shunt = kDefaultFaultShunt);
void remove_fault(AdmittanceMatrix& y, const AppliedFault& applied);

/// Y_kk - Y_ke Y_ee^-1 Y_ek. Kept nodes appear in the order given. Throws
/// NumericalError naming the nodes spanning the singular part of Y_ee.
AdmittanceMatrix kron_reduce(const AdmittanceMatrix& y,
                             const std::vector<Node>& keep);

// --- Partitioned blocks ---------------------------------------------------

/// Generator-internal plus fictitious-node admittance of one area:
///   [ y11 y12 ]   rows/cols: gen_order, then one fictitious node per
///   [ y21 y22 ]   tie-line (source voltage = far-end bus phasor).
/// Without boundary nodes (unpartitioned model) y12/y21/y22 are empty.
struct ReducedYMatrix {
  Eigen::MatrixXcd y11;
  Eigen::MatrixXcd y12;
  Eigen::MatrixXcd y21;
  Eigen::MatrixXcd y22;
  std::vector<int> gen_order;
  std::vector<int> boundary_order;  // far-end bus id per fictitious node
  std::vector<int> tie_lines;       // tie-line id per fictitious node

  Eigen::Index num_generators() const {
    return static_cast<Eigen::Index>(gen_order.size());
  }
  Eigen::Index num_boundary() const {
    return static_cast<Eigen::Index>(boundary_order.size());
  }
};

/// Splits an admittance already reduced to the area's generator-internal
/// and fictitious nodes into the four blocks. Throws ValidationError when
/// the node set differs from the area's generators and tie-lines.
ReducedYMatrix partition_admittance(const AdmittanceMatrix& y_gen,
                                    const BusNetwork& net,
                                    const PartitionSpec& part, Area area);

/// Internal-node admittance of the whole network (no boundary).
ReducedYMatrix whole_system_admittance(
    const BusNetwork& net, const std::optional<FaultSpec>& fault = {});

/// Reduced admittance of one area of net.partition.
ReducedYMatrix area_admittance(const BusNetwork& net, Area area,
                               const std::optional<FaultSpec>& fault = {});

// --- Topology changes -----------------------------------------------------

/// Copy of net with the branch out of service.
BusNetwork trip_line(const BusNetwork& net, int branch_id);

/// Copy of net with every branch incident to the bus out of service and the
/// bus load shed (the bus is de-energized).
BusNetwork trip_bus(const BusNetwork& net, int bus_id);

}  // namespace amr
