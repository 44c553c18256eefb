#include "amr/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <Eigen/LU>

#include "amr/errors.hpp"

namespace amr {

namespace {

template <typename T>
std::size_t find_by_id(const std::vector<T>& items, int id, const char* what) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id == id) return i;
  }
  throw ValidationError(std::string("unknown ") + what + " id " +
                        std::to_string(id));
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

void require(bool ok, const std::string& who, const std::string& what) {
  if (!ok) throw ValidationError(who + ": " + what);
}

// Buses that keep a connection to something: an in-service branch or a
// generator.
std::set<int> energized_buses(const BusNetwork& net) {
  std::set<int> out;
  for (const Branch& br : net.branches) {
    if (!br.in_service) continue;
    out.insert(br.from_bus);
    out.insert(br.to_bus);
  }
  for (const Generator& g : net.generators) out.insert(g.bus_id);
  return out;
}

Complex series_admittance(const Branch& br) {
  return 1.0 / Complex(br.resistance, br.reactance);
}

Complex load_admittance(const Bus& bus) {
  const double v2 = bus.voltage_magnitude * bus.voltage_magnitude;
  return Complex(bus.load_p, -bus.load_q) / v2;
}

Complex stator_admittance(const GeneratorParams& p) {
  return 1.0 / Complex(p.ra, p.xd_p);
}

class Assembler {
 public:
  explicit Assembler(std::vector<Node> nodes) : nodes_(std::move(nodes)) {
    y_ = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nodes_.size()),
                                static_cast<Eigen::Index>(nodes_.size()));
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      index_[key(nodes_[i])] = static_cast<Eigen::Index>(i);
    }
  }

  Eigen::Index at(const Node& n) const { return index_.at(key(n)); }

  void series(const Node& a, const Node& b, Complex y) {
    const Eigen::Index i = at(a), j = at(b);
    y_(i, i) += y;
    y_(j, j) += y;
    y_(i, j) -= y;
    y_(j, i) -= y;
  }

  void shunt(const Node& a, Complex y) {
    const Eigen::Index i = at(a);
    y_(i, i) += y;
  }

  AdmittanceMatrix finish() && {
    return AdmittanceMatrix{std::move(y_), std::move(nodes_)};
  }

 private:
  static std::pair<int, int> key(const Node& n) {
    return {static_cast<int>(n.kind), n.id};
  }

  std::vector<Node> nodes_;
  std::map<std::pair<int, int>, Eigen::Index> index_;
  Eigen::MatrixXcd y_;
};

void check_branch(const Branch& br) {
  if (br.resistance == 0.0 && br.reactance == 0.0) {
    throw NumericalError("branch " + std::to_string(br.id) +
                         " has zero impedance");
  }
}

AdmittanceMatrix assemble(const BusNetwork& net,
                          const std::set<int>* area_buses,
                          const std::vector<int>* tie_lines,
                          const std::optional<FaultSpec>& fault) {
  const std::set<int> live = energized_buses(net);
  auto in_scope = [&](int bus_id) {
    return live.count(bus_id) && (!area_buses || area_buses->count(bus_id));
  };

  std::vector<Node> nodes;
  for (const Bus& b : net.buses) {
    if (in_scope(b.id)) nodes.push_back({NodeKind::kBus, b.id});
  }
  for (const Generator& g : net.generators) {
    if (in_scope(g.bus_id)) nodes.push_back({NodeKind::kInternal, g.id});
  }
  if (tie_lines) {
    for (int tie : *tie_lines) nodes.push_back({NodeKind::kFictitious, tie});
  }

  Assembler asm_(std::move(nodes));
  for (const Bus& b : net.buses) {
    if (!in_scope(b.id)) continue;
    if (b.load_p != 0.0 || b.load_q != 0.0) {
      asm_.shunt({NodeKind::kBus, b.id}, load_admittance(b));
    }
  }
  for (const Branch& br : net.branches) {
    if (!br.in_service) continue;
    const bool from_in = in_scope(br.from_bus);
    const bool to_in = in_scope(br.to_bus);
    if (!from_in && !to_in) continue;
    check_branch(br);
    const Complex ys = series_admittance(br);
    const Complex half_charging(0.0, 0.5 * br.shunt_susceptance);
    if (from_in && to_in) {
      asm_.series({NodeKind::kBus, br.from_bus}, {NodeKind::kBus, br.to_bus},
                  ys);
      asm_.shunt({NodeKind::kBus, br.from_bus}, half_charging);
      asm_.shunt({NodeKind::kBus, br.to_bus}, half_charging);
      continue;
    }
    // Tie-line seen from inside one area.
    const bool is_tie =
        tie_lines && std::find(tie_lines->begin(), tie_lines->end(), br.id) !=
                         tie_lines->end();
    if (!is_tie) {
      throw ValidationError("branch " + std::to_string(br.id) +
                            " leaves the area but is not a tie-line");
    }
    const int near = from_in ? br.from_bus : br.to_bus;
    asm_.series({NodeKind::kBus, near}, {NodeKind::kFictitious, br.id}, ys);
    asm_.shunt({NodeKind::kBus, near}, half_charging);
  }
  for (const Generator& g : net.generators) {
    if (!in_scope(g.bus_id)) continue;
    asm_.series({NodeKind::kInternal, g.id}, {NodeKind::kBus, g.bus_id},
                stator_admittance(g.params));
  }
  if (fault) {
    if (!in_scope(fault->bus_id)) {
      throw ValidationError("fault bus " + std::to_string(fault->bus_id) +
                            " is not an energized bus of this network");
    }
    asm_.shunt({NodeKind::kBus, fault->bus_id}, fault->shunt);
  }
  return std::move(asm_).finish();
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t BusNetwork::bus_index(int bus_id) const {
  return find_by_id(buses, bus_id, "bus");
}
std::size_t BusNetwork::branch_index(int branch_id) const {
  return find_by_id(branches, branch_id, "branch");
}
std::size_t BusNetwork::generator_index(int gen_id) const {
  return find_by_id(generators, gen_id, "generator");
}

std::vector<int> BusNetwork::generator_ids(Area a) const {
  std::vector<int> out;
  if (!partition) {
    if (a == Area::kStudy) out = generator_ids();
    return out;
  }
  const std::set<int>& set = partition->generators(a);
  for (const Generator& g : generators) {
    if (set.count(g.id)) out.push_back(g.id);
  }
  return out;
}

std::vector<int> BusNetwork::generator_ids() const {
  std::vector<int> out;
  out.reserve(generators.size());
  for (const Generator& g : generators) out.push_back(g.id);
  return out;
}

void validate(const GeneratorParams& p, const std::string& who) {
  require(positive_finite(p.h), who, "h must be > 0");
  require(std::isfinite(p.d) && p.d >= 0.0, who, "d must be >= 0");
  require(positive_finite(p.xd_p), who, "xd_p must be > 0");
  require(positive_finite(p.xq_p), who, "xq_p must be > 0");
  require(p.xd >= p.xd_p, who, "xd must be >= xd_p");
  require(p.xq >= p.xq_p, who, "xq must be >= xq_p");
  require(std::isfinite(p.ra) && p.ra >= 0.0, who, "ra must be >= 0");
  for (auto [name, v] : {std::pair{"tdo_p", p.tdo_p}, {"tqo_p", p.tqo_p},
                         {"tch", p.tch}, {"tgv", p.tgv}, {"ta", p.ta},
                         {"tf", p.tf}, {"te", p.te}}) {
    require(positive_finite(v), who,
            std::string("time constant ") + name + " must be > 0");
  }
  require(positive_finite(p.r_gov), who, "r_gov must be > 0");
  require(positive_finite(p.ka), who, "ka must be > 0");
  for (auto [name, v] : {std::pair{"kf", p.kf}, {"ke", p.ke},
                         {"ae", p.ae}, {"be", p.be}}) {
    require(std::isfinite(v), who, std::string(name) + " must be finite");
  }
}

void validate(const BusNetwork& net) {
  require(positive_finite(net.base_mva), "network", "base_mva must be > 0");
  std::set<int> bus_ids;
  for (const Bus& b : net.buses) {
    const std::string who = "bus " + std::to_string(b.id);
    require(bus_ids.insert(b.id).second, who, "duplicate id");
    require(positive_finite(b.voltage_magnitude), who,
            "voltage_magnitude must be > 0");
    require(std::isfinite(b.voltage_angle) && std::isfinite(b.load_p) &&
                std::isfinite(b.load_q),
            who, "non-finite value");
  }
  std::set<int> branch_ids;
  for (const Branch& br : net.branches) {
    const std::string who = "branch " + std::to_string(br.id);
    require(branch_ids.insert(br.id).second, who, "duplicate id");
    require(bus_ids.count(br.from_bus), who,
            "from_bus " + std::to_string(br.from_bus) + " does not exist");
    require(bus_ids.count(br.to_bus), who,
            "to_bus " + std::to_string(br.to_bus) + " does not exist");
    require(br.from_bus != br.to_bus, who, "endpoints must differ");
    if (br.in_service) {
      require(br.reactance != 0.0, who, "in-service reactance must be nonzero");
    }
    require(std::isfinite(br.resistance) && std::isfinite(br.reactance) &&
                std::isfinite(br.shunt_susceptance),
            who, "non-finite value");
  }
  std::set<int> gen_ids;
  for (const Generator& g : net.generators) {
    const std::string who = "generator " + std::to_string(g.id);
    require(gen_ids.insert(g.id).second, who, "duplicate id");
    require(bus_ids.count(g.bus_id), who,
            "bus_id " + std::to_string(g.bus_id) + " does not exist");
    validate(g.params, who);
  }
  if (net.partition) {
    const PartitionSpec rebuilt =
        make_partition(net, net.partition->study_buses,
                       net.partition->external_buses);
    require(rebuilt == *net.partition, "partition",
            "derived sets are inconsistent with the bus split");
  }
}

PartitionSpec make_partition(const BusNetwork& net, std::set<int> study_buses,
                             std::set<int> external_buses) {
  PartitionSpec part;
  for (int id : study_buses) {
    if (external_buses.count(id)) {
      throw ValidationError("partition: bus " + std::to_string(id) +
                            " is in both areas");
    }
  }
  for (const Bus& b : net.buses) {
    if (!study_buses.count(b.id) && !external_buses.count(b.id)) {
      throw ValidationError("partition: bus " + std::to_string(b.id) +
                            " is in neither area");
    }
  }
  for (int id : study_buses) {
    if (!std::any_of(net.buses.begin(), net.buses.end(),
                     [id](const Bus& b) { return b.id == id; })) {
      throw ValidationError("partition: unknown bus " + std::to_string(id));
    }
  }
  for (int id : external_buses) {
    if (!std::any_of(net.buses.begin(), net.buses.end(),
                     [id](const Bus& b) { return b.id == id; })) {
      throw ValidationError("partition: unknown bus " + std::to_string(id));
    }
  }
  part.study_buses = std::move(study_buses);
  part.external_buses = std::move(external_buses);
  for (const Generator& g : net.generators) {
    (part.study_buses.count(g.bus_id) ? part.study_generators
                                      : part.external_generators)
        .insert(g.id);
  }
  for (const Branch& br : net.branches) {
    const bool from_study = part.study_buses.count(br.from_bus) > 0;
    const bool to_study = part.study_buses.count(br.to_bus) > 0;
    if (from_study == to_study) continue;
    part.tie_lines.push_back(br.id);
    part.study_boundary_buses.insert(from_study ? br.from_bus : br.to_bus);
    part.external_boundary_buses.insert(from_study ? br.to_bus : br.from_bus);
  }
  std::sort(part.tie_lines.begin(), part.tie_lines.end());
  return part;
}

// ---------------------------------------------------------------------------

std::string to_string(const Node& node) {
  switch (node.kind) {
    case NodeKind::kBus:
      return "bus " + std::to_string(node.id);
    case NodeKind::kInternal:
      return "gen " + std::to_string(node.id) + " internal";
    case NodeKind::kFictitious:
      return "tie " + std::to_string(node.id) + " source";
  }
  return "?";
}

Eigen::Index AdmittanceMatrix::index_of(const Node& node) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] == node) return static_cast<Eigen::Index>(i);
  }
  throw ValidationError("node not present: " + to_string(node));
}

AdmittanceMatrix build_admittance(const BusNetwork& net,
                                  const std::optional<FaultSpec>& fault) {
  return assemble(net, nullptr, nullptr, fault);
}

AdmittanceMatrix build_area_admittance(const BusNetwork& net, Area area,
                                       const std::optional<FaultSpec>& fault) {
  if (!net.partition) {
    throw ValidationError("network has no partition");
  }
  const PartitionSpec& part = *net.partition;
  std::vector<int> live_ties;
  for (int tie : part.tie_lines) {
    if (net.branch(tie).in_service) live_ties.push_back(tie);
  }
  return assemble(net, &part.buses(area), &live_ties, fault);
}

AppliedFault apply_fault(AdmittanceMatrix& y, int bus_id, Complex shunt) {
  const Eigen::Index i = y.index_of({NodeKind::kBus, bus_id});
  AppliedFault applied{i, y.y(i, i)};
  y.y(i, i) += shunt;
  return applied;
}

void remove_fault(AdmittanceMatrix& y, const AppliedFault& applied) {
  y.y(applied.node, applied.node) = applied.saved_diagonal;
}

AdmittanceMatrix kron_reduce(const AdmittanceMatrix& y,
                             const std::vector<Node>& keep) {
  const Eigen::Index n = y.y.rows();
  std::vector<Eigen::Index> k_idx;
  std::vector<bool> kept(static_cast<std::size_t>(n), false);
  for (const Node& node : keep) {
    const Eigen::Index i = y.index_of(node);
    if (kept[static_cast<std::size_t>(i)]) {
      throw ValidationError("kron_reduce: duplicate node " + to_string(node));
    }
    kept[static_cast<std::size_t>(i)] = true;
    k_idx.push_back(i);
  }
  std::vector<Eigen::Index> e_idx;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!kept[static_cast<std::size_t>(i)]) e_idx.push_back(i);
  }
  const auto nk = static_cast<Eigen::Index>(k_idx.size());
  const auto ne = static_cast<Eigen::Index>(e_idx.size());

  Eigen::MatrixXcd ykk(nk, nk), yke(nk, ne), yek(ne, nk), yee(ne, ne);
  for (Eigen::Index a = 0; a < nk; ++a) {
    for (Eigen::Index b = 0; b < nk; ++b) ykk(a, b) = y.y(k_idx[a], k_idx[b]);
    for (Eigen::Index b = 0; b < ne; ++b) yke(a, b) = y.y(k_idx[a], e_idx[b]);
  }
  for (Eigen::Index a = 0; a < ne; ++a) {
    for (Eigen::Index b = 0; b < nk; ++b) yek(a, b) = y.y(e_idx[a], k_idx[b]);
    for (Eigen::Index b = 0; b < ne; ++b) yee(a, b) = y.y(e_idx[a], e_idx[b]);
  }

  AdmittanceMatrix out;
  out.nodes = keep;
  if (ne == 0) {
    out.y = ykk;
    return out;
  }
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(yee);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) {
    const Eigen::MatrixXcd kernel = lu.kernel();
    std::ostringstream msg;
    msg << "kron_reduce: eliminated block is singular; offending nodes:";
    for (Eigen::Index a = 0; a < ne; ++a) {
      if (kernel.row(a).cwiseAbs().maxCoeff() > 1e-8) {
        msg << " [" << to_string(y.nodes[e_idx[a]]) << "]";
      }
    }
    throw NumericalError(msg.str());
  }
  out.y = ykk - yke * lu.solve(yek);
  return out;
}

ReducedYMatrix partition_admittance(const AdmittanceMatrix& y_gen,
                                    const BusNetwork& net,
                                    const PartitionSpec& part, Area area) {
  ReducedYMatrix out;
  std::vector<Eigen::Index> g_idx, b_idx;
  for (const Generator& g : net.generators) {
    if (!part.generators(area).count(g.id)) continue;
    out.gen_order.push_back(g.id);
  }
  for (int tie : part.tie_lines) {
    const Branch& br = net.branch(tie);
    if (!br.in_service) continue;
    const bool from_here = part.buses(area).count(br.from_bus) > 0;
    out.tie_lines.push_back(tie);
    out.boundary_order.push_back(from_here ? br.to_bus : br.from_bus);
  }
  std::size_t expected = out.gen_order.size() + out.tie_lines.size();
  if (y_gen.nodes.size() != expected) {
    throw ValidationError(
        "partition_admittance: index set mismatch (matrix has " +
        std::to_string(y_gen.nodes.size()) + " nodes, area needs " +
        std::to_string(expected) + ")");
  }
  for (int id : out.gen_order) {
    g_idx.push_back(y_gen.index_of({NodeKind::kInternal, id}));
  }
  for (int tie : out.tie_lines) {
    b_idx.push_back(y_gen.index_of({NodeKind::kFictitious, tie}));
  }
  const auto ng = static_cast<Eigen::Index>(g_idx.size());
  const auto nb = static_cast<Eigen::Index>(b_idx.size());
  out.y11.resize(ng, ng);
  out.y12.resize(ng, nb);
  out.y21.resize(nb, ng);
  out.y22.resize(nb, nb);
  for (Eigen::Index i = 0; i < ng; ++i) {
    for (Eigen::Index j = 0; j < ng; ++j) out.y11(i, j) = y_gen.y(g_idx[i], g_idx[j]);
    for (Eigen::Index j = 0; j < nb; ++j) out.y12(i, j) = y_gen.y(g_idx[i], b_idx[j]);
  }
  for (Eigen::Index i = 0; i < nb; ++i) {
    for (Eigen::Index j = 0; j < ng; ++j) out.y21(i, j) = y_gen.y(b_idx[i], g_idx[j]);
    for (Eigen::Index j = 0; j < nb; ++j) out.y22(i, j) = y_gen.y(b_idx[i], b_idx[j]);
  }
  return out;
}

ReducedYMatrix whole_system_admittance(const BusNetwork& net,
                                       const std::optional<FaultSpec>& fault) {
  const AdmittanceMatrix full = build_admittance(net, fault);
  std::vector<Node> keep;
  ReducedYMatrix out;
  for (const Generator& g : net.generators) {
    keep.push_back({NodeKind::kInternal, g.id});
    out.gen_order.push_back(g.id);
  }
  out.y11 = kron_reduce(full, keep).y;
  const auto ng = out.num_generators();
  out.y12.resize(ng, 0);
  out.y21.resize(0, ng);
  out.y22.resize(0, 0);
  return out;
}

ReducedYMatrix area_admittance(const BusNetwork& net, Area area,
                               const std::optional<FaultSpec>& fault) {
  const AdmittanceMatrix full = build_area_admittance(net, area, fault);
  std::vector<Node> keep;
  for (const Node& n : full.nodes) {
    if (n.kind == NodeKind::kInternal) keep.push_back(n);
  }
  for (const Node& n : full.nodes) {
    if (n.kind == NodeKind::kFictitious) keep.push_back(n);
  }
  return partition_admittance(kron_reduce(full, keep), net, *net.partition,
                              area);
}

BusNetwork trip_line(const BusNetwork& net, int branch_id) {
  BusNetwork out = net;
  out.branches[out.branch_index(branch_id)].in_service = false;
  return out;
}

BusNetwork trip_bus(const BusNetwork& net, int bus_id) {
  BusNetwork out = net;
  Bus& bus = out.buses[out.bus_index(bus_id)];
  bus.load_p = 0.0;
  bus.load_q = 0.0;
  for (Branch& br : out.branches) {
    if (br.from_bus == bus_id || br.to_bus == bus_id) br.in_service = false;
  }
  return out;
}

}  // namespace amr
