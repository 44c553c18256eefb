#include "amr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "amr/errors.hpp"
#include "amr/hybrid.hpp"
#include "amr/trajectory_io.hpp"
#include "json.hpp"

namespace amr {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_grid(const Trajectory& ref, const Trajectory& test) {
  if (ref.times.size() != test.times.size() ||
      ref.states.rows() != test.states.rows() ||
      ref.states.cols() != test.states.cols() ||
      ref.gen_order != test.gen_order) {
    throw DimensionError("rmse: trajectories have different grids (" +
                         std::to_string(ref.times.size()) + " vs " +
                         std::to_string(test.times.size()) + " samples)");
  }
  for (std::size_t k = 0; k < ref.times.size(); ++k) {
    if (std::abs(ref.times[k] - test.times[k]) > 1e-9) {
      throw DimensionError("rmse: time grids differ at sample " +
                           std::to_string(k));
    }
  }
}

std::vector<int> study_or_all(const BusNetwork& net) {
  return net.partition ? net.generator_ids(Area::kStudy) : net.generator_ids();
}

// Rounded sweep value so that 10 - 0.1 k prints and compares cleanly.
double sweep_value(const SweepOptions& o, int k) {
  const double v = o.start - o.step * k;
  return std::round(v * 1e9) / 1e9;
}

SweepResult finish_sweep(SweepResult res) {
  if (!res.met && !res.trace.empty()) {
    const auto best = std::min_element(
        res.trace.begin(), res.trace.end(),
        [](const SweepPoint& a, const SweepPoint& b) {
          return a.error_deg < b.error_deg;
        });
    res.chosen = best->value;
    res.error_deg = best->error_deg;
  }
  return res;
}

void check_sweep(const std::vector<FaultEvent>& faults, const SweepOptions& o) {
  if (faults.empty()) throw ValidationError("sweep needs at least one fault");
  if (!(o.step > 0.0)) throw ValidationError("sweep step must be > 0");
  if (!(o.start >= o.stop)) throw ValidationError("sweep start below stop");
}

// Worst study-generator angle RMSE of one faulted run, +inf on failure.
double fault_error(const BusNetwork& net, const FaultEvent& fault,
                   const Trajectory& ref, SimConfig cfg, Trajectory* out) {
  cfg.fault = fault;
  try {
    Trajectory traj = run_simulation(net, cfg);
    double err = kInf;
    if (traj.stable && traj.num_samples() == ref.num_samples()) {
      err = worst_generator(ref, traj, study_or_all(net)).rmse_deg;
    }
    if (out) *out = std::move(traj);
    return err;
  } catch (const NumericalError&) {
    return kInf;
  }
}

}  // namespace

// --- Error metrics ----------------------------------------------------------

double rmse(const Trajectory& ref, const Trajectory& test,
            Eigen::Index column) {
  check_same_grid(ref, test);
  if (column < 0 || column >= ref.states.cols()) {
    throw DimensionError("rmse: column " + std::to_string(column) +
                         " out of range");
  }
  const Eigen::Index n = ref.states.rows();
  if (n == 0) return 0.0;
  const double ss = (ref.states.col(column) - test.states.col(column))
                        .squaredNorm();
  return std::sqrt(ss / static_cast<double>(n));
}

double rmse_state(const Trajectory& ref, const Trajectory& test, int gen_id,
                  int field) {
  const double v = rmse(ref, test, ref.column(gen_id, field));
  return field == kDelta ? v / kDegree : v;
}

RmseTable rmse_table(const Trajectory& ref, const Trajectory& test) {
  check_same_grid(ref, test);
  RmseTable t;
  t.gen_order = ref.gen_order;
  t.values.resize(static_cast<Eigen::Index>(ref.gen_order.size()),
                  kStatesPerMachine);
  for (std::size_t g = 0; g < ref.gen_order.size(); ++g) {
    for (int f = 0; f < kStatesPerMachine; ++f) {
      t.values(static_cast<Eigen::Index>(g), f) =
          rmse_state(ref, test, ref.gen_order[g], f);
    }
  }
  return t;
}

WorstGenerator worst_generator(const Trajectory& ref, const Trajectory& test,
                               const std::vector<int>& gens) {
  if (gens.empty()) throw ValidationError("worst_generator: empty set");
  WorstGenerator w;
  w.rmse_deg = -1.0;
  for (int id : gens) {
    const double e = rmse_state(ref, test, id, kDelta);
    if (e > w.rmse_deg) w = {id, e};
  }
  return w;
}

// --- CCT ----------------------------------------------------------------------

FaultEvent fault_with_duration(const FaultEvent& shape, double duration) {
  FaultEvent f = shape;
  f.t_clear = f.t_on + duration;
  return f;
}

bool is_stable(const BusNetwork& net, const SimConfig& cfg) {
  SimConfig c = cfg;
  c.stop_on_instability = true;
  try {
    return run_simulation(net, c).stable;
  } catch (const NumericalError&) {
    return false;
  }
}

CctResult find_cct(const BusNetwork& net, int bus_id, const SimConfig& base,
                   double lo, double hi) {
  if (!(lo >= 0.0 && lo < hi)) {
    throw ValidationError("cct bracket must satisfy 0 <= lo < hi");
  }
  FaultEvent shape = base.fault.value_or(FaultEvent{});
  shape.bus_id = bus_id;
  const double h = base.step;
  CctResult res;
  auto stable_at = [&](long steps) {
    SimConfig cfg = base;
    cfg.fault.reset();
    if (steps > 0) {
      FaultEvent f = shape;
      f.t_clear = f.t_on + static_cast<double>(steps) * h;
      cfg.fault = f;
    }
    ++res.runs;
    return is_stable(net, cfg);
  };

  long lo_steps = std::lround(lo / h);
  long hi_steps = std::lround(hi / h);
  if (!stable_at(lo_steps)) {
    throw ValidationError("cct bracket: lower end " + std::to_string(lo) +
                          " s is already unstable at bus " +
                          std::to_string(bus_id));
  }
  if (stable_at(hi_steps)) {
    throw ValidationError("cct bracket: upper end " + std::to_string(hi) +
                          " s is still stable at bus " +
                          std::to_string(bus_id));
  }
  while (hi_steps - lo_steps > 1) {
    const long mid = lo_steps + (hi_steps - lo_steps) / 2;
    if (stable_at(mid)) {
      lo_steps = mid;
    } else {
      hi_steps = mid;
    }
  }
  res.steps = lo_steps;
  res.cct = static_cast<double>(lo_steps) * h;
  return res;
}

// --- Sweeps -------------------------------------------------------------------

std::vector<Trajectory> reference_runs(const BusNetwork& net,
                                       const std::vector<FaultEvent>& faults,
                                       const SimConfig& base) {
  std::vector<Trajectory> refs;
  refs.reserve(faults.size());
  for (const FaultEvent& f : faults) {
    SimConfig cfg = base;
    cfg.policy = Policy::kFullOnly;
    cfg.fault = f;
    cfg.stop_on_instability = false;
    refs.push_back(run_simulation(net, cfg));
  }
  return refs;
}

double max_fault_error(const BusNetwork& net,
                       const std::vector<FaultEvent>& faults,
                       const std::vector<Trajectory>& refs,
                       const SimConfig& cfg) {
  if (refs.size() != faults.size()) {
    throw DimensionError("max_fault_error: one reference per fault");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < faults.size(); ++i) {
    worst = std::max(worst, fault_error(net, faults[i], refs[i], cfg, nullptr));
  }
  return worst;
}

SweepResult threshold_sweep(const BusNetwork& net,
                            const std::vector<FaultEvent>& faults,
                            const SweepOptions& opts) {
  check_sweep(faults, opts);
  if (!net.partition) throw ValidationError("threshold sweep needs a partition");
  const std::vector<Trajectory> refs = reference_runs(net, faults, opts.base);

  const ReducedYMatrix y_ext = area_admittance(net, Area::kExternal);
  const Eigen::VectorXd norms = column_norms(y_ext.y21);

  SimConfig cfg = opts.base;
  cfg.policy = Policy::kAdaptivePartitioned;
  cfg.adaptive.delta_max = 0.0;
  cfg.adaptive.t_th_max = kInf;

  SweepResult res;
  std::map<std::vector<int>, double> memo;
  for (int k = 0;; ++k) {
    const double t = sweep_value(opts, k);
    if (t < opts.stop - 1e-9) break;
    std::vector<int> kept;
    for (std::size_t i = 0; i < y_ext.gen_order.size(); ++i) {
      if (norms[static_cast<Eigen::Index>(i)] >= t) {
        kept.push_back(y_ext.gen_order[i]);
      }
    }
    auto it = memo.find(kept);
    if (it == memo.end()) {
      cfg.adaptive.threshold_pu = t;
      const double err = max_fault_error(net, faults, refs, cfg);
      res.simulations += static_cast<int>(faults.size());
      it = memo.emplace(kept, err).first;
    }
    res.trace.push_back({t, it->second});
    if (it->second < opts.error_limit_deg) {
      res.chosen = t;
      res.error_deg = it->second;
      res.met = true;
      return res;
    }
  }
  return finish_sweep(std::move(res));
}

SweepResult delta_max_sweep(const BusNetwork& net,
                            const std::vector<FaultEvent>& faults,
                            const SweepOptions& opts) {
  check_sweep(faults, opts);
  const std::vector<Trajectory> refs = reference_runs(net, faults, opts.base);

  SimConfig cfg = opts.base;
  cfg.policy = Policy::kAdaptivePartitioned;

  // A run only depends on delta_max through the tests delta_dev > delta_max,
  // so the same trajectory holds for every delta_max in [lo, hi).
  struct Interval {
    double lo, hi, err;
  };
  std::vector<std::vector<Interval>> memo(faults.size());

  SweepResult res;
  for (int k = 0;; ++k) {
    const double d_deg = sweep_value(opts, k);
    if (d_deg < opts.stop - 1e-9) break;
    const double d = d_deg * kDegree;
    double worst = 0.0;
    for (std::size_t i = 0; i < faults.size(); ++i) {
      const auto hit = std::find_if(
          memo[i].begin(), memo[i].end(),
          [&](const Interval& iv) { return iv.lo <= d && d < iv.hi; });
      double err;
      if (hit != memo[i].end()) {
        err = hit->err;
      } else {
        cfg.adaptive.delta_max = d;
        Trajectory traj;
        err = fault_error(net, faults[i], refs[i], cfg, &traj);
        ++res.simulations;
        Interval iv{-kInf, kInf, err};
        for (double dd : traj.delta_dev) {
          if (std::isnan(dd)) continue;
          if (dd <= d) iv.lo = std::max(iv.lo, dd);
          else iv.hi = std::min(iv.hi, dd);
        }
        // A failed run has no usable log; keep it to this value only.
        if (traj.delta_dev.empty()) iv = {d, std::nextafter(d, kInf), err};
        memo[i].push_back(iv);
      }
      worst = std::max(worst, err);
    }
    res.trace.push_back({d_deg, worst});
    if (worst < opts.error_limit_deg) {
      res.chosen = d_deg;
      res.error_deg = worst;
      res.met = true;
      return res;
    }
  }
  return finish_sweep(std::move(res));
}

// --- Timing -------------------------------------------------------------------

Timing time_run(const Simulator& sim, int repeats) {
  if (repeats < 1) throw ValidationError("timing needs at least one run");
  Timing t;
  for (int i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Trajectory traj = sim.run();
    const auto stop = std::chrono::steady_clock::now();
    (void)traj;
    t.samples.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::vector<double> s = t.samples;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  t.median = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  return t;
}

double parse_threshold(const std::string& text, double base_mva) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ValidationError("threshold '" + text + "': expected <value>pu or <value>S");
  }
  const std::string unit = text.substr(used);
  if (unit == "pu" || unit == "p.u.") {
    if (!(v >= 0.0)) throw ValidationError("threshold must be >= 0");
    return v;
  }
  if (unit == "S") return threshold_to_pu(v, base_mva);
  throw ValidationError("threshold '" + text +
                        "': unit suffix must be 'pu' or 'S'");
}

// --- Scenarios ------------------------------------------------------------------

namespace {

FaultEvent fault_from_json(const json& f) {
  FaultEvent ev;
  ev.bus_id = f.at("bus").get<int>();
  ev.t_on = f.value("t_on", ev.t_on);
  ev.t_clear = f.value("t_clear", ev.t_clear);
  ev.post_action =
      parse_post_action(f.value("post_action", std::string("none")));
  ev.trip_branch = f.value("trip_branch", 0);
  return ev;
}

}  // namespace

std::vector<FaultEvent> parse_faults(const std::string& text) {
  try {
    const json doc = json::parse(text);
    const json& list = doc.is_object() ? doc.at("faults") : doc;
    if (!list.is_array()) throw ParseError("faults: expected an array");
    std::vector<FaultEvent> out;
    for (const json& f : list) out.push_back(fault_from_json(f));
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("faults JSON: ") + e.what());
  }
}

std::vector<FaultEvent> load_faults(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open faults file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_faults(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Scenario parse_scenario(const std::string& text,
                        const std::filesystem::path& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("scenario JSON: expected an object");
  Scenario sc;
  try {
    sc.id = doc.value("id", sc.id);
    if (doc.contains("network")) {
      std::filesystem::path p = doc.at("network").get<std::string>();
      if (p.is_relative() && !origin.empty()) p = origin / p;
      sc.network = p;
    }
    sc.base.step = doc.value("step", sc.base.step);
    sc.base.duration = doc.value("duration", sc.base.duration);
    sc.base.stop_on_instability =
        doc.value("stop_on_instability", sc.base.stop_on_instability);
    if (doc.contains("fault") && !doc.at("fault").is_null()) {
      sc.base.fault = fault_from_json(doc.at("fault"));
    }
    for (const json& p : doc.value("policies", json::array())) {
      sc.policies.push_back(parse_policy(p.get<std::string>()));
    }
    if (doc.contains("adaptive")) {
      const json& a = doc.at("adaptive");
      AdaptiveOptions& ad = sc.base.adaptive;
      if (a.contains("threshold")) {
        sc.threshold = a.at("threshold").get<std::string>();
      }
      if (a.contains("delta_max_deg")) {
        ad.delta_max = a.at("delta_max_deg").get<double>() * kDegree;
      }
      ad.t_th_max = a.value("t_th_max", ad.t_th_max);
      ad.hankel_tol = a.value("hankel_tol", ad.hankel_tol);
    }
    sc.timing_repeats = doc.value("timing_repeats", sc.timing_repeats);
    sc.write_trajectories =
        doc.value("write_trajectories", sc.write_trajectories);
  } catch (const json::exception& e) {
    throw ParseError("scenario '" + sc.id + "': " + e.what());
  }
  if (sc.policies.empty()) sc.policies.push_back(Policy::kFullOnly);
  if (sc.timing_repeats < 1) {
    throw ValidationError("scenario '" + sc.id + "': timing_repeats < 1");
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.parent_path());
}

const PolicyReport& ScenarioReport::at(Policy p) const {
  for (const PolicyReport& r : policies) {
    if (r.policy == p) return r;
  }
  throw ValidationError("report has no policy " + to_string(p));
}

namespace {

std::string context(const Scenario& sc, const std::exception& e) {
  return "scenario '" + sc.id + "': " + e.what();
}

json timing_json(const Timing& t) {
  return {{"median_s", t.median}, {"samples_s", t.samples}};
}

void write_angle_file(const ScenarioReport& rep, const Trajectory& ref,
                      int gen_id, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  const Eigen::Index col = ref.column(gen_id, kDelta);
  out << "# rotor angle of generator " << gen_id << " (deg)\n# time full_only";
  for (const PolicyReport& p : rep.policies) out << ' ' << to_string(p.policy);
  out << '\n';
  out.precision(10);
  for (Eigen::Index k = 0; k < ref.num_samples(); ++k) {
    out << ref.times[static_cast<std::size_t>(k)] << ' '
        << ref.states(k, col) / kDegree;
    for (const PolicyReport& p : rep.policies) {
      const Trajectory& t = p.trajectory;
      if (k < t.num_samples()) {
        out << ' ' << t.states(k, col) / kDegree;
      } else {
        out << " nan";
      }
    }
    out << '\n';
  }
}

}  // namespace

std::string report_json(const ScenarioReport& rep) {
  json doc;
  doc["id"] = rep.id;
  doc["reference_timing"] = timing_json(rep.reference_timing);
  json pols = json::array();
  for (const PolicyReport& p : rep.policies) {
    json table = json::object();
    for (std::size_t g = 0; g < p.rmse.gen_order.size(); ++g) {
      json row = json::object();
      for (int f = 0; f < kStatesPerMachine; ++f) {
        const double v = p.rmse.values(static_cast<Eigen::Index>(g), f);
        row[state_field_name(f)] = std::isfinite(v) ? json(v) : json(nullptr);
      }
      table[std::to_string(p.rmse.gen_order[g])] = std::move(row);
    }
    json entry = {
        {"policy", to_string(p.policy)},
        {"stable", p.stable},
        {"worst_generator", p.worst.gen_id},
        {"worst_rmse_deg", std::isfinite(p.worst.rmse_deg)
                               ? json(p.worst.rmse_deg)
                               : json(nullptr)},
        {"rmse", std::move(table)},
        {"timing", timing_json(p.timing)},
        {"speedup", p.speedup},
        {"relinearizations", p.relinearizations},
        {"relinearization_failures", p.relinearization_failures},
        {"reduced_order", p.reduced_order},
        {"nonlinear_generators", p.nonlinear_generators},
    };
    pols.push_back(std::move(entry));
  }
  doc["policies"] = std::move(pols);
  return doc.dump(2);
}

ScenarioReport run_scenario(const BusNetwork& net, const Scenario& sc,
                            const std::optional<std::filesystem::path>& out_dir) {
  SimConfig base = sc.base;
  if (sc.threshold) base.adaptive.threshold_pu =
      parse_threshold(*sc.threshold, net.base_mva);

  ScenarioReport rep;
  rep.id = sc.id;
  try {
    SimConfig ref_cfg = base;
    ref_cfg.policy = Policy::kFullOnly;
    const Simulator ref_sim(net, ref_cfg);
    rep.reference_timing = time_run(ref_sim, sc.timing_repeats);
    const Trajectory ref = ref_sim.run();
    const std::vector<int> gens = study_or_all(net);

    for (Policy p : sc.policies) {
      PolicyReport pr;
      pr.policy = p;
      SimConfig cfg = base;
      cfg.policy = p;
      const Simulator sim(net, cfg);
      pr.timing = p == Policy::kFullOnly ? rep.reference_timing
                                         : time_run(sim, sc.timing_repeats);
      pr.trajectory = p == Policy::kFullOnly ? ref : sim.run();
      pr.speedup = rep.reference_timing.median / pr.timing.median;
      if (p == Policy::kFullOnly) pr.speedup = 1.0;
      pr.stable = pr.trajectory.stable;
      pr.relinearizations = pr.trajectory.relinearization_events.size();
      pr.relinearization_failures =
          pr.trajectory.relinearization_failures.size();
      pr.reduced_order = sim.reduced_order();
      pr.nonlinear_generators = sim.nonlinear_generators();
      if (pr.trajectory.num_samples() == ref.num_samples()) {
        pr.rmse = rmse_table(ref, pr.trajectory);
        pr.worst = worst_generator(ref, pr.trajectory, gens);
      } else {
        pr.rmse.gen_order = ref.gen_order;
        pr.rmse.values = Eigen::MatrixXd::Constant(
            static_cast<Eigen::Index>(ref.gen_order.size()), kStatesPerMachine,
            kInf);
        pr.worst = {gens.front(), kInf};
      }
      rep.policies.push_back(std::move(pr));
    }

    if (out_dir) {
      std::filesystem::create_directories(*out_dir);
      std::ofstream(*out_dir / "report.json") << report_json(rep) << '\n';
      if (sc.write_trajectories) {
        write_trajectory_csv(ref, *out_dir / "full_only.csv");
        write_trajectory_sidecar(ref, *out_dir / "full_only.json");
        for (const PolicyReport& p : rep.policies) {
          if (p.policy == Policy::kFullOnly) continue;
          const std::string stem = to_string(p.policy);
          write_trajectory_csv(p.trajectory, *out_dir / (stem + ".csv"));
          write_trajectory_sidecar(p.trajectory, *out_dir / (stem + ".json"));
        }
      }
      int plot_gen = gens.front();
      double worst = -1.0;
      for (const PolicyReport& p : rep.policies) {
        if (p.policy != Policy::kFullOnly && p.worst.rmse_deg > worst) {
          worst = p.worst.rmse_deg;
          plot_gen = p.worst.gen_id;
        }
      }
      write_angle_file(rep, ref, plot_gen, *out_dir / "rotor_angles.dat");
    }
  } catch (const NumericalError& e) {
    throw NumericalError(context(sc, e));
  } catch (const DimensionError& e) {
    throw DimensionError(context(sc, e));
  } catch (const ParseError& e) {
    throw ParseError(context(sc, e));
  } catch (const ValidationError& e) {
    throw ValidationError(context(sc, e));
  }
  return rep;
}

}  // namespace amr
