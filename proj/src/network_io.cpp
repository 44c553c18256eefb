#include <fstream>
#include <iomanip>
#include <sstream>

#include "amr/errors.hpp"
#include "amr/netmodel.hpp"
#include "json.hpp"

namespace amr {

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& node, std::string path)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) {
      throw ParseError(path_ + ": expected an object");
    }
  }

  double number(const char* key) const {
    const json& v = field(key);
    if (!v.is_number()) throw ParseError(at(key) + ": expected a number");
    return v.get<double>();
  }

  double number_or(const char* key, double fallback) const {
    return node_.contains(key) ? number(key) : fallback;
  }

  int integer(const char* key) const {
    const json& v = field(key);
    if (!v.is_number_integer()) {
      throw ParseError(at(key) + ": expected an integer");
    }
    return v.get<int>();
  }

  bool boolean_or(const char* key, bool fallback) const {
    if (!node_.contains(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_boolean()) throw ParseError(at(key) + ": expected a boolean");
    return v.get<bool>();
  }

  const json& array(const char* key) const {
    const json& v = field(key);
    if (!v.is_array()) throw ParseError(at(key) + ": expected an array");
    return v;
  }

  const json& field(const char* key) const {
    if (!node_.contains(key)) throw ParseError(at(key) + ": missing field");
    return node_.at(key);
  }

  std::string at(const char* key) const { return path_ + "." + key; }

 private:
  const json& node_;
  std::string path_;
};

std::string index_path(const char* base, std::size_t i) {
  return std::string(base) + "[" + std::to_string(i) + "]";
}

GeneratorParams read_params(const json& node, const std::string& path) {
  Reader r(node, path);
  GeneratorParams p;
  p.h = r.number("h");
  p.d = r.number("d");
  p.xd = r.number("xd");
  p.xq = r.number("xq");
  p.xd_p = r.number("xd_p");
  p.xq_p = r.number("xq_p");
  p.ra = r.number("ra");
  p.tdo_p = r.number("tdo_p");
  p.tqo_p = r.number("tqo_p");
  p.tch = r.number("tch");
  p.tgv = r.number("tgv");
  p.r_gov = r.number("r_gov");
  p.ka = r.number("ka");
  p.ta = r.number("ta");
  p.kf = r.number("kf");
  p.tf = r.number("tf");
  p.ke = r.number("ke");
  p.te = r.number("te");
  p.ae = r.number("ae");
  p.be = r.number("be");
  return p;
}

json write_params(const GeneratorParams& p) {
  return json{{"h", p.h},       {"d", p.d},         {"xd", p.xd},
              {"xq", p.xq},     {"xd_p", p.xd_p},   {"xq_p", p.xq_p},
              {"ra", p.ra},     {"tdo_p", p.tdo_p}, {"tqo_p", p.tqo_p},
              {"tch", p.tch},   {"tgv", p.tgv},     {"r_gov", p.r_gov},
              {"ka", p.ka},     {"ta", p.ta},       {"kf", p.kf},
              {"tf", p.tf},     {"ke", p.ke},       {"te", p.te},
              {"ae", p.ae},     {"be", p.be}};
}

std::set<int> read_id_set(const json& arr, const std::string& path) {
  std::set<int> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number_integer()) {
      throw ParseError(path + "[" + std::to_string(i) +
                       "]: expected an integer bus id");
    }
    out.insert(arr[i].get<int>());
  }
  return out;
}

}  // namespace

BusNetwork parse_network(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("network JSON: ") + e.what());
  }
  Reader top(doc, "$");
  BusNetwork net;
  net.base_mva = top.number("base_mva");

  const json& buses = top.array("buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    Reader r(buses[i], index_path("$.buses", i));
    Bus b;
    b.id = r.integer("id");
    b.voltage_magnitude = r.number("voltage_magnitude");
    b.voltage_angle = r.number("voltage_angle");
    b.load_p = r.number_or("load_p", 0.0);
    b.load_q = r.number_or("load_q", 0.0);
    net.buses.push_back(b);
  }

  const json& branches = top.array("branches");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    Reader r(branches[i], index_path("$.branches", i));
    Branch br;
    br.id = r.integer("id");
    br.from_bus = r.integer("from_bus");
    br.to_bus = r.integer("to_bus");
    br.resistance = r.number("resistance");
    br.reactance = r.number("reactance");
    br.shunt_susceptance = r.number_or("shunt_susceptance", 0.0);
    br.in_service = r.boolean_or("in_service", true);
    net.branches.push_back(br);
  }

  const json& gens = top.array("generators");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string path = index_path("$.generators", i);
    Reader r(gens[i], path);
    Generator g;
    g.id = r.integer("id");
    g.bus_id = r.integer("bus_id");
    g.dispatch_p = r.number("dispatch_p");
    g.dispatch_q = r.number("dispatch_q");
    g.params = read_params(r.field("params"), path + ".params");
    net.generators.push_back(g);
  }

  if (doc.contains("partition") && !doc.at("partition").is_null()) {
    Reader r(doc.at("partition"), "$.partition");
    std::set<int> study = read_id_set(r.array("study_buses"),
                                      "$.partition.study_buses");
    std::set<int> external = read_id_set(r.array("external_buses"),
                                         "$.partition.external_buses");
    net.partition = make_partition(net, std::move(study), std::move(external));
  }

  validate(net);
  return net;
}

BusNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_network(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string dump_network(const BusNetwork& net) {
  json doc;
  doc["base_mva"] = net.base_mva;
  doc["buses"] = json::array();
  for (const Bus& b : net.buses) {
    doc["buses"].push_back({{"id", b.id},
                            {"voltage_magnitude", b.voltage_magnitude},
                            {"voltage_angle", b.voltage_angle},
                            {"load_p", b.load_p},
                            {"load_q", b.load_q}});
  }
  doc["branches"] = json::array();
  for (const Branch& br : net.branches) {
    doc["branches"].push_back({{"id", br.id},
                               {"from_bus", br.from_bus},
                               {"to_bus", br.to_bus},
                               {"resistance", br.resistance},
                               {"reactance", br.reactance},
                               {"shunt_susceptance", br.shunt_susceptance},
                               {"in_service", br.in_service}});
  }
  doc["generators"] = json::array();
  for (const Generator& g : net.generators) {
    doc["generators"].push_back({{"id", g.id},
                                 {"bus_id", g.bus_id},
                                 {"dispatch_p", g.dispatch_p},
                                 {"dispatch_q", g.dispatch_q},
                                 {"params", write_params(g.params)}});
  }
  if (net.partition) {
    doc["partition"] = {{"study_buses", net.partition->study_buses},
                        {"external_buses", net.partition->external_buses}};
  }
  return doc.dump(2);
}

void save_network(const BusNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write network file " + path.string());
  out << dump_network(net) << '\n';
}

}  // namespace amr
