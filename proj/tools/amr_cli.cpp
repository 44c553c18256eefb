// Command-line front end: scenario runs, CCT search and threshold sweeps.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "amr/errors.hpp"
#include "amr/harness.hpp"
#include "amr/simulate.hpp"

namespace {

struct Overrides {
  std::string threshold;
  std::optional<double> tth_max;
  std::optional<double> delta_max_deg;
  std::string hankel_dump;

  void add_to(CLI::App* app) {
    app->add_option("--threshold", threshold,
                    "column-norm threshold with unit, e.g. 1.0pu or 0.25S");
    app->add_option("--tth-max", tth_max, "re-linearization trigger (s)");
    app->add_option("--delta-max", delta_max_deg, "angle trigger (deg)");
    app->add_option("--hankel-dump", hankel_dump,
                    "write the external Hankel values to this CSV");
  }

  void apply(amr::SimConfig& cfg, const amr::BusNetwork& net) const {
    if (!threshold.empty()) {
      cfg.adaptive.threshold_pu = amr::parse_threshold(threshold, net.base_mva);
    }
    if (tth_max) cfg.adaptive.t_th_max = *tth_max;
    if (delta_max_deg) cfg.adaptive.delta_max = *delta_max_deg * amr::kDegree;
  }

  void dump_hankel(const amr::BusNetwork& net, amr::SimConfig cfg) const {
    if (hankel_dump.empty()) return;
    cfg.policy = amr::Policy::kLinearOnly;
    cfg.fault.reset();
    const amr::Simulator sim(net, cfg);
    std::ofstream out(hankel_dump);
    if (!out) throw amr::ParseError("cannot write " + hankel_dump);
    out << "index,hankel,retained\n";
    out.precision(17);
    const Eigen::VectorXd& h = sim.hankel_values();
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      out << i + 1 << ',' << h[i] << ',' << (i < sim.reduced_order() ? 1 : 0)
          << '\n';
    }
  }
};

void print_report(const amr::ScenarioReport& rep) {
  std::printf("scenario %s  (full_only median %.4f s)\n", rep.id.c_str(),
              rep.reference_timing.median);
  std::printf("%-24s %8s %12s %10s %8s %6s\n", "policy", "worst", "rmse_deg",
              "median_s", "speedup", "relin");
  for (const amr::PolicyReport& p : rep.policies) {
    std::printf("%-24s %8d %12.5g %10.4f %8.3f %6zu%s\n",
                amr::to_string(p.policy).c_str(), p.worst.gen_id,
                p.worst.rmse_deg, p.timing.median, p.speedup,
                p.relinearizations, p.stable ? "" : "  UNSTABLE");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive model reduction for transient stability simulation"};
  app.require_subcommand(1);

  std::string net_path;
  Overrides ov;

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "run a scenario file");
  std::string scenario_path, policy_name, out_dir;
  sim_cmd->add_option("--net", net_path, "network JSON");
  sim_cmd->add_option("--scenario", scenario_path, "scenario JSON")->required();
  sim_cmd->add_option("--policy", policy_name,
                      "run only this policy (full_only, linear_only, "
                      "adaptive_partitioned, adaptive_unpartitioned, "
                      "partitioned_full)");
  sim_cmd->add_option("--out", out_dir, "output directory");
  ov.add_to(sim_cmd);

  // cct
  auto* cct_cmd = app.add_subcommand("cct", "critical clearing time at a bus");
  int bus = 0;
  std::string bracket = "0.01,1.0";
  std::string cct_policy = "full_only";
  double step = 0.01, duration = 16.0, t_on = 0.1;
  cct_cmd->add_option("--net", net_path, "network JSON")->required();
  cct_cmd->add_option("--bus", bus, "faulted bus id")->required();
  cct_cmd->add_option("--bracket", bracket, "stable,unstable fault durations (s)");
  cct_cmd->add_option("--policy", cct_policy, "simulation policy");
  cct_cmd->add_option("--step", step, "integration step (s)");
  cct_cmd->add_option("--duration", duration, "horizon (s)");
  cct_cmd->add_option("--t-on", t_on, "fault inception (s)");
  ov.add_to(cct_cmd);

  // sweeps
  auto* thr_cmd = app.add_subcommand("sweep-threshold",
                                     "descending column-norm threshold sweep");
  auto* dm_cmd = app.add_subcommand("sweep-delta-max",
                                    "descending angle-trigger sweep");
  std::string faults_path;
  double limit_deg = 6.0;
  for (auto* c : {thr_cmd, dm_cmd}) {
    c->add_option("--net", net_path, "network JSON")->required();
    c->add_option("--faults", faults_path, "faults JSON")->required();
    c->add_option("--limit-deg", limit_deg, "rotor-angle RMSE limit (deg)");
    c->add_option("--step", step, "integration step (s)");
    c->add_option("--duration", duration, "horizon (s)");
    ov.add_to(c);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim_cmd) {
      amr::Scenario sc = amr::load_scenario(scenario_path);
      if (net_path.empty()) {
        if (!sc.network) {
          throw amr::ValidationError("no --net and no network in the scenario");
        }
        net_path = sc.network->string();
      }
      const amr::BusNetwork net = amr::load_network(net_path);
      if (!ov.threshold.empty()) sc.threshold = ov.threshold;
      ov.apply(sc.base, net);
      if (!policy_name.empty()) sc.policies = {amr::parse_policy(policy_name)};
      ov.dump_hankel(net, sc.base);
      const amr::ScenarioReport rep = amr::run_scenario(
          net, sc,
          out_dir.empty() ? std::nullopt
                          : std::optional<std::filesystem::path>(out_dir));
      print_report(rep);
      return 0;
    }

    const amr::BusNetwork net = amr::load_network(net_path);
    amr::SimConfig base;
    base.step = step;
    base.duration = duration;
    ov.apply(base, net);
    ov.dump_hankel(net, base);

    if (*cct_cmd) {
      const auto comma = bracket.find(',');
      if (comma == std::string::npos) {
        throw amr::ValidationError("--bracket expects lo,hi");
      }
      const double lo = std::stod(bracket.substr(0, comma));
      const double hi = std::stod(bracket.substr(comma + 1));
      base.policy = amr::parse_policy(cct_policy);
      amr::FaultEvent shape;
      shape.t_on = t_on;
      base.fault = shape;
      const amr::CctResult r = amr::find_cct(net, bus, base, lo, hi);
      std::printf("bus %d cct %.2f s (%ld steps, %d runs)\n", bus, r.cct,
                  r.steps, r.runs);
      return 0;
    }

    const std::vector<amr::FaultEvent> faults = amr::load_faults(faults_path);
    amr::SweepOptions opts;
    opts.base = base;
    opts.error_limit_deg = limit_deg;
    amr::SweepResult r;
    const char* what = "threshold";
    const char* unit = "pu";
    if (*thr_cmd) {
      r = amr::threshold_sweep(net, faults, opts);
    } else {
      opts.start = 180.0;
      opts.step = 1.0;
      what = "delta_max";
      unit = "deg";
      r = amr::delta_max_sweep(net, faults, opts);
    }
    for (const amr::SweepPoint& p : r.trace) {
      std::printf("%s %8.3f %s  error %.4f deg\n", what, p.value, unit,
                  p.error_deg);
    }
    std::printf("%s %s %.3f %s (error %.4f deg, %d simulations)\n",
                r.met ? "chosen" : "limit not met; best", what, r.chosen, unit,
                r.error_deg, r.simulations);
    return r.met ? 0 : 3;
  } catch (const amr::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
  } catch (const amr::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
  } catch (const amr::DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
  } catch (const amr::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 2;
}
