#include "amr/trajectory_io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "amr/errors.hpp"
#include "json.hpp"

namespace amr {

namespace {

using nlohmann::json;

// CSV column order per generator.
constexpr std::array<int, kStatesPerMachine> kCsvFields = {
    kDelta, kOmega, kPm, kPgv, kVr, kRf, kEfd, kEdp, kEqp};

}  // namespace

const char* state_field_name(int field) {
  switch (field) {
    case kDelta: return "delta";
    case kPm: return "pm";
    case kPgv: return "pgv";
    case kVr: return "vr";
    case kRf: return "rf";
    case kEfd: return "efd";
    case kEdp: return "ed_p";
    case kEqp: return "eq_p";
    case kOmega: return "omega";
  }
  throw DimensionError("unknown state field " + std::to_string(field));
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  return out;
}

void put(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  line += buf;
}

json number_or_null(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

}  // namespace

std::string field_column_name(int gen_id, int field) {
  return "gen" + std::to_string(gen_id) + "_" + state_field_name(field);
}

std::string trajectory_csv_header(const Trajectory& traj) {
  std::string h = "time";
  for (int id : traj.gen_order) {
    for (int f : kCsvFields) h += "," + field_column_name(id, f);
  }
  return h;
}

void write_trajectory_csv(const Trajectory& traj,
                          const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << trajectory_csv_header(traj) << '\n';
  std::string line;
  for (Eigen::Index k = 0; k < traj.num_samples(); ++k) {
    line.clear();
    put(line, traj.times[static_cast<std::size_t>(k)]);
    for (std::size_t g = 0; g < traj.gen_order.size(); ++g) {
      for (int f : kCsvFields) {
        line += ',';
        put(line, traj.states(k, static_cast<Eigen::Index>(
                                     kStatesPerMachine * g + f)));
      }
    }
    out << line << '\n';
  }
  if (!out) throw ParseError("write failed for " + path.string());
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw ParseError(path.string() + ": empty file");

  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  if (cols.empty() || cols[0] != "time" ||
      (cols.size() - 1) % kStatesPerMachine != 0) {
    throw ParseError(path.string() + ": unexpected header");
  }
  Trajectory traj;
  const std::size_t ng = (cols.size() - 1) / kStatesPerMachine;
  for (std::size_t g = 0; g < ng; ++g) {
    const std::string& c = cols[1 + kStatesPerMachine * g];
    int id = 0;
    if (std::sscanf(c.c_str(), "gen%d_delta", &id) != 1) {
      throw ParseError(path.string() + ": bad column '" + c + "'");
    }
    traj.gen_order.push_back(id);
    for (std::size_t f = 0; f < kCsvFields.size(); ++f) {
      if (cols[1 + kStatesPerMachine * g + f] !=
          field_column_name(id, kCsvFields[f])) {
        throw ParseError(path.string() + ": bad column '" +
                         cols[1 + kStatesPerMachine * g + f] + "'");
      }
    }
  }

  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError(path.string() + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != cols.size()) {
      throw ParseError(path.string() + ": row " +
                       std::to_string(rows.size() + 1) + " has " +
                       std::to_string(row.size()) + " cells");
    }
    rows.push_back(std::move(row));
  }
  traj.states.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(kStatesPerMachine * ng));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    traj.times.push_back(rows[k][0]);
    for (std::size_t g = 0; g < ng; ++g) {
      for (std::size_t f = 0; f < kCsvFields.size(); ++f) {
        traj.states(static_cast<Eigen::Index>(k),
                    static_cast<Eigen::Index>(kStatesPerMachine * g +
                                              kCsvFields[f])) =
            rows[k][1 + kStatesPerMachine * g + f];
      }
    }
  }
  return traj;
}

std::string trajectory_sidecar_json(const Trajectory& traj) {
  json doc;
  doc["gen_order"] = traj.gen_order;
  json modes = json::array();
  for (Mode m : traj.mode_log) modes.push_back(to_string(m));
  doc["mode_log"] = std::move(modes);
  json dev = json::array();
  for (double d : traj.delta_dev) dev.push_back(number_or_null(d));
  doc["delta_dev"] = std::move(dev);
  doc["relinearization_events"] = traj.relinearization_events;
  doc["relinearization_continuity"] = traj.relinearization_continuity;
  doc["relinearization_failures"] = traj.relinearization_failures;
  json sw = json::array();
  for (const SwitchEvent& e : traj.switches) {
    sw.push_back({{"time", e.time},
                  {"from", to_string(e.from)},
                  {"to", to_string(e.to)},
                  {"continuity_error", e.continuity_error}});
  }
  doc["switches"] = std::move(sw);
  doc["stable"] = traj.stable;
  doc["instability_time"] = number_or_null(traj.instability_time);
  return doc.dump(2);
}

void write_trajectory_sidecar(const Trajectory& traj,
                              const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << trajectory_sidecar_json(traj) << '\n';
}

}  // namespace amr
