#include "amr/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "amr/errors.hpp"
#include "amr/exchange.hpp"
#include "amr/hybrid.hpp"
#include "amr/linearize.hpp"
#include "amr/mor.hpp"

namespace amr {

namespace {

constexpr int kN = kStatesPerMachine;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Rk4Work {
  Eigen::VectorXd k1, k2, k3, k4, tmp;

  explicit Rk4Work(Eigen::Index n) : k1(n), k2(n), k3(n), k4(n), tmp(n) {}
};

// f(x, dx) writes the derivative into dx.
template <class F>
void rk4_inplace(F&& f, Eigen::VectorXd& x, double h, Rk4Work& w, long step) {
  f(x, w.k1);
  w.tmp = x + (0.5 * h) * w.k1;
  f(w.tmp, w.k2);
  w.tmp = x + (0.5 * h) * w.k2;
  f(w.tmp, w.k3);
  w.tmp = x + h * w.k3;
  f(w.tmp, w.k4);
  x += (h / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4);
  if (!x.allFinite()) {
    throw NumericalError("non-finite derivative at step " +
                         std::to_string(step));
  }
}

struct NetConfig {
  BusNetwork net;
  std::optional<FaultSpec> fault;
};

// Reduced external-area model plus the exact RK4 propagator of its linear
// part.
struct ReducedModels {
  LinearModel lin;
  Eigen::VectorXd op;  // operating point the Jacobians were taken at
  BalancedReduction red;
  std::optional<HybridModel> hyb;
  Rk4Propagator prop;
  Eigen::MatrixXd gamma_b;  // gamma * B~
  Eigen::VectorXd g_off;    // gamma * T f0
};

struct WholeModels {
  LinearModel lin;
  Eigen::VectorXd op;
  HybridModel hyb;
  Rk4Propagator prop;
  Eigen::VectorXd g_off;  // gamma * f0
};

std::shared_ptr<const ReducedModels> build_reduced(
    LinearModel lin, Eigen::VectorXd op, const FunctionSelection* sel,
    double tol, double h) {
  auto m = std::make_shared<ReducedModels>();
  m->lin = std::move(lin);
  m->op = std::move(op);
  m->red = reduce_linear(m->lin, tol);
  if (sel) m->hyb = make_hybrid(m->lin, m->red, *sel);
  const Eigen::Index m_in = m->red.b_r.cols();
  Eigen::MatrixXd inputs(m->red.r, m_in + 1);
  inputs << m->red.b_r, m->red.t * m->lin.f0;
  m->prop = rk4_propagator(m->red.a_r, h, inputs);
  m->gamma_b = m->prop.gamma_inputs.leftCols(m_in);
  m->g_off = m->prop.gamma_inputs.col(m_in);
  return m;
}

std::shared_ptr<const WholeModels> build_whole(LinearModel lin,
                                               Eigen::VectorXd op,
                                               const FunctionSelection& sel,
                                               double h) {
  auto m = std::make_shared<WholeModels>();
  m->lin = std::move(lin);
  m->op = std::move(op);
  m->hyb = make_hybrid_unpartitioned(m->lin, sel);
  m->prop = rk4_propagator(m->lin.a, h, m->lin.f0);
  m->g_off = m->prop.gamma_inputs.col(0);
  return m;
}

// Tangent model for the operating condition the system is heading to, expanded
// about the current state x so that switching keeps x exactly. Newton starts
// from the previous operating point (rotated to x's reference angle when the
// system has no boundary) and falls back to x itself. Throws NumericalError
// when neither converges.
LinearModel relinearize(const Eigen::VectorXd& prev_op, const Eigen::VectorXd& x,
                        const BoundaryInput& u, const ReducedYMatrix& y,
                        const std::vector<GeneratorParams>& params,
                        Eigen::VectorXd& op_out) {
  Eigen::VectorXd guess = prev_op;
  if (y.num_boundary() == 0) {
    const double shift = x[kDelta] - prev_op[kDelta];
    for (Eigen::Index i = kDelta; i < guess.size(); i += kN) guess[i] += shift;
  }
  OperatingPoint op;
  try {
    op = find_operating_point(guess, u, y, params);
  } catch (const NumericalError&) {
    op = find_operating_point(x, u, y, params);
  }
  op_out = op.x;
  return linearize_about(op, x, u, y, params);
}

std::vector<Eigen::Index> canonical_index(const std::vector<int>& order,
                                          const std::vector<int>& canonical) {
  std::vector<Eigen::Index> out;
  for (int id : order) {
    const auto it = std::find(canonical.begin(), canonical.end(), id);
    out.push_back(static_cast<Eigen::Index>(it - canonical.begin()));
  }
  return out;
}

template <class Row>
void scatter(const Eigen::VectorXd& x, const std::vector<Eigen::Index>& canon,
             Row&& row) {
  for (std::size_t i = 0; i < canon.size(); ++i) {
    row.segment(kN * canon[i], kN) =
        x.segment(kN * static_cast<Eigen::Index>(i), kN);
  }
}

Eigen::VectorXd gather(const Eigen::VectorXd& row,
                       const std::vector<Eigen::Index>& canon) {
  Eigen::VectorXd x(kN * static_cast<Eigen::Index>(canon.size()));
  for (std::size_t i = 0; i < canon.size(); ++i) {
    x.segment(kN * static_cast<Eigen::Index>(i), kN) =
        row.segment(kN * canon[i], kN);
  }
  return x;
}

bool is_tie(const BusNetwork& net, int branch_id) {
  const auto& ties = net.partition->tie_lines;
  return std::find(ties.begin(), ties.end(), branch_id) != ties.end();
}

}  // namespace

// --- integration primitives ---------------------------------------------

Eigen::VectorXd step_rk4(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& rhs,
    const Eigen::VectorXd& x, double h, long step_index) {
  if (!(h > 0.0)) throw ValidationError("step_rk4: h must be > 0");
  Eigen::VectorXd out = x;
  Rk4Work w(x.size());
  rk4_inplace([&](const Eigen::VectorXd& s, Eigen::VectorXd& d) { d = rhs(s); },
              out, h, w, step_index);
  return out;
}

Rk4Propagator rk4_propagator(const Eigen::MatrixXd& a, double h,
                             const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd ha = h * a;
  const Eigen::MatrixXd p2 = ha * ha;
  // phi = I + hA + p2 (I/2 + hA/6 + p2/24): two n^3 products in total.
  Eigen::MatrixXd tail = p2 / 24.0 + ha / 6.0;
  tail.diagonal().array() += 0.5;
  Rk4Propagator out;
  out.phi.noalias() = p2 * tail;
  out.phi += ha;
  out.phi.diagonal().array() += 1.0;
  // gamma M = h (M + hA M / 2 + p2 (M / 6 + hA M / 24)), thin products only.
  const Eigen::MatrixXd ham = ha * inputs;
  Eigen::MatrixXd inner = inputs / 6.0 + ham / 24.0;
  out.gamma_inputs = h * (inputs + ham / 2.0);
  out.gamma_inputs.noalias() += h * (p2 * inner);
  return out;
}

Rk4Propagator rk4_propagator(const Eigen::MatrixXd& a, double h) {
  return rk4_propagator(a, h, Eigen::MatrixXd::Identity(a.rows(), a.cols()));
}

// --- enums ----------------------------------------------------------------

std::string to_string(Policy p) {
  switch (p) {
    case Policy::kFullOnly:
      return "full_only";
    case Policy::kLinearOnly:
      return "linear_only";
    case Policy::kAdaptivePartitioned:
      return "adaptive_partitioned";
    case Policy::kAdaptiveUnpartitioned:
      return "adaptive_unpartitioned";
    case Policy::kPartitionedFull:
      return "partitioned_full";
  }
  return "?";
}

Policy parse_policy(std::string_view s) {
  for (Policy p : {Policy::kFullOnly, Policy::kLinearOnly,
                   Policy::kAdaptivePartitioned, Policy::kAdaptiveUnpartitioned,
                   Policy::kPartitionedFull}) {
    if (s == to_string(p)) return p;
  }
  throw ValidationError("unknown policy '" + std::string(s) + "'");
}

bool is_partitioned(Policy p) {
  return p == Policy::kLinearOnly || p == Policy::kAdaptivePartitioned ||
         p == Policy::kPartitionedFull;
}

std::string to_string(PostAction a) {
  switch (a) {
    case PostAction::kNone:
      return "none";
    case PostAction::kTripLine:
      return "trip_line";
    case PostAction::kTripBus:
      return "trip_bus";
  }
  return "?";
}

PostAction parse_post_action(std::string_view s) {
  if (s == "none") return PostAction::kNone;
  if (s == "trip_line") return PostAction::kTripLine;
  if (s == "trip_bus") return PostAction::kTripBus;
  throw ValidationError("unknown post_action '" + std::string(s) + "'");
}

// --- validation -------------------------------------------------------------

void validate(const SimConfig& cfg, const BusNetwork& net) {
  auto fail = [](const std::string& what) { throw ValidationError(what); };
  if (!(cfg.step > 0.0) || !std::isfinite(cfg.step)) fail("step must be > 0");
  if (!(cfg.duration >= cfg.step)) fail("duration must be at least one step");
  const bool partitioned = is_partitioned(cfg.policy);
  const bool adaptive = cfg.policy == Policy::kAdaptivePartitioned ||
                        cfg.policy == Policy::kAdaptiveUnpartitioned;
  if ((partitioned || adaptive) && !net.partition) {
    fail("policy " + to_string(cfg.policy) + " needs a partitioned network");
  }
  if (cfg.fault) {
    const FaultEvent& f = *cfg.fault;
    if (!(f.t_on >= 0.0 && f.t_on < f.t_clear && f.t_clear <= cfg.duration)) {
      fail("fault times must satisfy 0 <= t_on < t_clear <= duration");
    }
    net.bus(f.bus_id);  // throws if missing
    const bool need_study = partitioned || adaptive;
    if (need_study && !net.partition->study_buses.contains(f.bus_id)) {
      fail("fault bus " + std::to_string(f.bus_id) +
           " is not in the study area");
    }
    if (f.post_action == PostAction::kTripLine) {
      const Branch& br = net.branch(f.trip_branch);
      if (need_study) {
        if (is_tie(net, br.id)) {
          fail("tripping tie-line " + std::to_string(br.id) +
               " would change the partition");
        }
        if (!net.partition->study_buses.contains(br.from_bus)) {
          fail("tripped line " + std::to_string(br.id) +
               " is not inside the study area");
        }
      }
    } else if (f.post_action == PostAction::kTripBus && need_study) {
      for (int tie : net.partition->tie_lines) {
        const Branch& br = net.branch(tie);
        if (br.from_bus == f.bus_id || br.to_bus == f.bus_id) {
          fail("tripping bus " + std::to_string(f.bus_id) +
               " would trip tie-line " + std::to_string(tie));
        }
      }
    }
  }
  const AdaptiveOptions& ad = cfg.adaptive;
  if (!(ad.threshold_pu >= 0.0)) fail("threshold must be >= 0");
  if (!(ad.t_th_max > 0.0)) fail("t_th_max must be > 0");
  if (!(ad.hankel_tol >= 0.0)) fail("hankel tolerance must be >= 0");
  if (ad.delta_max && !(*ad.delta_max >= 0.0)) fail("delta_max must be >= 0");
  const long n_steps = std::lround(cfg.duration / cfg.step);
  if (cfg.start_step < 0 || cfg.start_step >= n_steps) {
    fail("start_step outside the time grid");
  }
  if (cfg.initial_state &&
      cfg.initial_state->size() !=
          kN * static_cast<Eigen::Index>(net.generators.size())) {
    fail("initial_state has the wrong size");
  }
}

// --- trajectory helpers ---------------------------------------------------

Eigen::Index Trajectory::column(int gen_id, int field) const {
  const auto it = std::find(gen_order.begin(), gen_order.end(), gen_id);
  if (it == gen_order.end()) {
    throw ValidationError("trajectory has no generator " +
                          std::to_string(gen_id));
  }
  return kN * static_cast<Eigen::Index>(it - gen_order.begin()) + field;
}

bool is_unstable_sample(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& x_start) {
  const Eigen::Index ng = x.size() / kN;
  double lo = 0.0, hi = 0.0;
  for (Eigen::Index i = 0; i < ng; ++i) {
    if (std::abs(x[kN * i + kOmega] - 1.0) > 0.5) return true;
    const double d = x[kN * i + kDelta] - x_start[kN * i + kDelta];
    if (!std::isfinite(d)) return true;
    if (i == 0 || d < lo) lo = d;
    if (i == 0 || d > hi) hi = d;
  }
  return hi - lo > 2.0 * std::numbers::pi;
}

// --- prepared state -------------------------------------------------------

struct Simulator::Prepared {
  std::vector<int> gen_order;
  long num_steps = 0;
  long k_on = -1;
  long k_clear = -1;
  bool post_differs = false;
  std::array<std::optional<NetConfig>, 3> nets;

  // Whole-network models (full_only, adaptive_unpartitioned).
  std::array<ReducedYMatrix, 3> y_w;
  std::vector<GeneratorParams> p_w;
  BoundaryInput u_w;
  Eigen::VectorXd x0_w;
  std::vector<Eigen::Index> w_canon;
  std::shared_ptr<const WholeModels> whole;

  // Partitioned models.
  std::array<ReducedYMatrix, 3> y_s, y_e;
  std::array<std::shared_ptr<const BoundaryOperator>, 3> ops;
  std::vector<GeneratorParams> p_s, p_e;
  BoundaryInput u0_s, u0_e;
  Eigen::VectorXd x0_s, x0_e;
  std::vector<Eigen::Index> s_canon, e_canon;
  std::shared_ptr<const ReducedModels> ext;

  // Switching.
  std::optional<FunctionSelection> sel;  // in the order of the switched model
  int ref_gen = -1;
  Eigen::Index ref_canon = -1;
  std::vector<Eigen::Index> study_canon;
  double delta_max = 0.0;

  Eigen::VectorXd x_start;  // equilibrium, network order

  int config_of(long k) const {
    if (k_on < 0 || k < k_on) return 0;
    return k < k_clear ? 1 : 2;
  }
};

Simulator::Simulator(const BusNetwork& net, SimConfig cfg)
    : cfg_(std::move(cfg)), prep_(std::make_unique<Prepared>()) {
  validate(cfg_, net);
  Prepared& p = *prep_;
  const double h = cfg_.step;
  p.gen_order = net.generator_ids();
  p.num_steps = std::lround(cfg_.duration / h);

  p.nets[0] = NetConfig{net, std::nullopt};
  if (cfg_.fault) {
    const FaultEvent& f = *cfg_.fault;
    p.k_on = std::lround(f.t_on / h);
    p.k_clear = std::lround(f.t_clear / h);
    p.nets[1] = NetConfig{net, FaultSpec{f.bus_id, f.shunt}};
    switch (f.post_action) {
      case PostAction::kNone:
        p.nets[2] = NetConfig{net, std::nullopt};
        break;
      case PostAction::kTripLine:
        p.nets[2] = NetConfig{trip_line(net, f.trip_branch), std::nullopt};
        p.post_differs = true;
        break;
      case PostAction::kTripBus:
        p.nets[2] = NetConfig{trip_bus(net, f.bus_id), std::nullopt};
        p.post_differs = true;
        break;
    }
  }

  const Policy pol = cfg_.policy;
  const bool adaptive = pol == Policy::kAdaptivePartitioned ||
                        pol == Policy::kAdaptiveUnpartitioned;
  p.x_start.resize(kN * static_cast<Eigen::Index>(p.gen_order.size()));

  if (!is_partitioned(pol)) {
    for (int c = 0; c < 3; ++c) {
      if (p.nets[c]) p.y_w[c] = whole_system_admittance(p.nets[c]->net, p.nets[c]->fault);
    }
    auto [x0, u] = init_equilibrium(net, p.y_w[0]);
    p.x0_w = x0.vector();
    p.u_w = u;
    p.p_w = params_for(net, p.y_w[0]);
    p.w_canon = canonical_index(p.y_w[0].gen_order, p.gen_order);
    scatter(p.x0_w, p.w_canon, p.x_start);
  } else {
    for (int c = 0; c < 3; ++c) {
      if (!p.nets[c]) continue;
      const NetConfig& nc = *p.nets[c];
      p.y_s[c] = area_admittance(nc.net, Area::kStudy, nc.fault);
      p.y_e[c] = area_admittance(nc.net, Area::kExternal);
      p.ops[c] = std::make_shared<BoundaryOperator>(nc.net, nc.fault, p.y_s[c],
                                                    p.y_e[c]);
    }
    auto [xs, us] = init_equilibrium(net, p.y_s[0]);
    auto [xe, ue] = init_equilibrium(net, p.y_e[0]);
    p.x0_s = xs.vector();
    p.x0_e = xe.vector();
    p.u0_s = us;
    p.u0_e = ue;
    p.p_s = params_for(net, p.y_s[0]);
    p.p_e = params_for(net, p.y_e[0]);
    p.s_canon = canonical_index(p.y_s[0].gen_order, p.gen_order);
    p.e_canon = canonical_index(p.y_e[0].gen_order, p.gen_order);
    scatter(p.x0_s, p.s_canon, p.x_start);
    scatter(p.x0_e, p.e_canon, p.x_start);
  }

  if (adaptive) {
    const ReducedYMatrix y_ext = is_partitioned(pol)
                                     ? p.y_e[0]
                                     : area_admittance(net, Area::kExternal);
    const Eigen::VectorXd norms = column_norms(y_ext.y21);
    p.ref_gen = amr::reference_generator(norms, y_ext.gen_order);
    p.ref_canon = canonical_index({p.ref_gen}, p.gen_order)[0];
    for (int id : net.generator_ids(Area::kStudy)) {
      p.study_canon.push_back(canonical_index({id}, p.gen_order)[0]);
    }
    const double thr = cfg_.adaptive.threshold_pu;
    if (pol == Policy::kAdaptivePartitioned) {
      p.sel = select_functions(norms, y_ext.gen_order, thr);
      p.delta_max = cfg_.adaptive.delta_max.value_or(kDefaultDeltaMaxPartitioned);
    } else {
      const std::vector<int>& order = p.y_w[0].gen_order;
      Eigen::VectorXd norms_w = Eigen::VectorXd::Zero(
          static_cast<Eigen::Index>(order.size()));
      for (std::size_t i = 0; i < y_ext.gen_order.size(); ++i) {
        const auto it = std::find(order.begin(), order.end(), y_ext.gen_order[i]);
        norms_w[it - order.begin()] = norms[static_cast<Eigen::Index>(i)];
      }
      p.sel = select_functions(norms_w, order, thr, net.partition->study_generators);
      p.delta_max =
          cfg_.adaptive.delta_max.value_or(kDefaultDeltaMaxUnpartitioned);
      p.whole = build_whole(linearize(p.x0_w, p.u_w, p.y_w[0], p.p_w), p.x0_w,
                            *p.sel, h);
    }
  }
  if (pol == Policy::kAdaptivePartitioned || pol == Policy::kLinearOnly) {
    p.ext = build_reduced(linearize(p.x0_e, p.u0_e, p.y_e[0], p.p_e), p.x0_e,
                          p.sel ? &*p.sel : nullptr, cfg_.adaptive.hankel_tol,
                          h);
  }
}

Simulator::~Simulator() = default;
Simulator::Simulator(Simulator&&) noexcept = default;
Simulator& Simulator::operator=(Simulator&&) noexcept = default;

const Eigen::VectorXd& Simulator::initial_state() const { return prep_->x_start; }

Eigen::Index Simulator::reduced_order() const {
  return prep_->ext ? prep_->ext->red.r : 0;
}

const Eigen::VectorXd& Simulator::hankel_values() const {
  static const Eigen::VectorXd kEmpty;
  return prep_->ext ? prep_->ext->red.hankel : kEmpty;
}

std::vector<int> Simulator::nonlinear_generators() const {
  if (!prep_->sel) return {};
  return {prep_->sel->nonlinear_gens.begin(), prep_->sel->nonlinear_gens.end()};
}

int Simulator::reference_generator() const { return prep_->ref_gen; }

// --- run ------------------------------------------------------------------

namespace {

// Shared bookkeeping of one run: time grid, recording, switching input.
class Recorder {
 public:
  Recorder(const Simulator::Prepared& p, const SimConfig& cfg, Trajectory& t)
      : p_(p), cfg_(cfg), t_(t) {
    const long start = cfg.start_step;
    const long rows = p.num_steps - start + 1;
    t_.gen_order = p.gen_order;
    t_.times.resize(static_cast<std::size_t>(rows));
    for (long k = 0; k < rows; ++k) {
      t_.times[static_cast<std::size_t>(k)] = static_cast<double>(start + k) * cfg.step;
    }
    t_.states.resize(rows, p.x_start.size());
    t_.mode_log.reserve(static_cast<std::size_t>(rows));
    t_.delta_dev.reserve(static_cast<std::size_t>(rows));
  }

  Eigen::VectorXd start_state() const {
    return cfg_.initial_state ? *cfg_.initial_state : p_.x_start;
  }

  long row_of(long k) const { return k - cfg_.start_step; }
  double time_of(long k) const { return static_cast<double>(k) * cfg_.step; }

  auto row(long k) { return t_.states.row(row_of(k)).transpose(); }

  double delta_dev(long k) const {
    const auto x = t_.states.row(row_of(k));
    const double ref = x[kN * p_.ref_canon + kDelta];
    const double ref0 = p_.x_start[kN * p_.ref_canon + kDelta];
    double worst = 0.0;
    for (Eigen::Index c : p_.study_canon) {
      const double d = (x[kN * c + kDelta] - ref) -
                       (p_.x_start[kN * c + kDelta] - ref0);
      worst = std::max(worst, std::abs(d));
    }
    return worst;
  }

  // Logs the step and returns false when the run must stop.
  bool finish_step(long k, Mode mode, double dd) {
    t_.mode_log.push_back(mode);
    t_.delta_dev.push_back(dd);
    const auto x = t_.states.row(row_of(k + 1)).transpose();
    if (t_.stable && is_unstable_sample(x, p_.x_start)) {
      t_.stable = false;
      t_.instability_time = time_of(k + 1);
      if (cfg_.stop_on_instability) {
        const long rows = row_of(k + 1) + 1;
        t_.states.conservativeResize(rows, Eigen::NoChange);
        t_.times.resize(static_cast<std::size_t>(rows));
        return false;
      }
    }
    return true;
  }

  void log_switch(long k, Mode from, Mode to, double err) {
    if (k == cfg_.start_step) return;
    t_.switches.push_back({time_of(k), from, to, err});
  }

 private:
  const Simulator::Prepared& p_;
  const SimConfig& cfg_;
  Trajectory& t_;
};

void run_whole(const Simulator::Prepared& p, const SimConfig& cfg,
               Trajectory& traj) {
  Recorder rec(p, cfg, traj);
  const double h = cfg.step;
  const bool adaptive = cfg.policy == Policy::kAdaptiveUnpartitioned;
  const Eigen::Index n = p.x0_w.size();

  Eigen::VectorXd x = gather(rec.start_state(), p.w_canon);
  rec.row(cfg.start_step) = rec.start_state();
  Rk4Work work(n);
  auto model = p.whole;
  bool post_model = false;
  SwitchState sw{Mode::kFull, p.delta_max, 0.0, cfg.adaptive.t_th_max, p.ref_gen};
  Mode mode = Mode::kFull;

  for (long k = cfg.start_step; k < p.num_steps; ++k) {
    const int c = p.config_of(k);
    const ReducedYMatrix& y = p.y_w[c];
    double dd = kNaN;
    Mode next = Mode::kFull;
    if (adaptive) {
      auto refresh = [&]() {
        try {
          Eigen::VectorXd op;
          LinearModel lin = relinearize(model->op, x, p.u_w, y, p.p_w, op);
          model = build_whole(std::move(lin), std::move(op), *p.sel, h);
          traj.relinearization_events.push_back(rec.time_of(k));
          // The physical state is carried over untouched.
          traj.relinearization_continuity.push_back(0.0);
        } catch (const NumericalError&) {
          traj.relinearization_failures.push_back(rec.time_of(k));
        }
      };
      if (c == 2 && p.post_differs && !post_model) {
        // Topology changed: the stored Jacobian belongs to the old network.
        refresh();
        post_model = true;
      }
      dd = rec.delta_dev(k);
      const SwitchDecision dec = switch_mode(sw, c == 1, dd, h);
      if (c == 1) dd = kNaN;  // not consulted while the fault is on
      sw = dec.state;
      if (dec.relinearize) {
        refresh();
        sw.t_th = 0.0;
      }
      next = sw.mode;
    }
    if (next != mode) rec.log_switch(k, mode, next, 0.0);
    mode = next;

    switch (mode) {
      case Mode::kFull:
        rk4_inplace(
            [&](const Eigen::VectorXd& s, Eigen::VectorXd& d) {
              rhs_full_into(s, y, p.u_w, p.p_w, d);
            },
            x, h, work, k);
        break;
      case Mode::kHybrid:
        rk4_inplace(
            [&](const Eigen::VectorXd& s, Eigen::VectorXd& d) {
              d = rhs_hybrid_unpartitioned(s, p.u_w, model->hyb, y, p.p_w);
            },
            x, h, work, k);
        break;
      case Mode::kLinear: {
        const Eigen::VectorXd z = x - model->lin.x0;
        x = model->lin.x0 + model->g_off;
        x.noalias() += model->prop.phi * z;
        if (!x.allFinite()) {
          throw NumericalError("non-finite state at step " + std::to_string(k));
        }
        break;
      }
    }
    auto row = rec.row(k + 1);
    scatter(x, p.w_canon, row);
    if (!rec.finish_step(k, mode, dd)) break;
  }
}

void run_partitioned(const Simulator::Prepared& p, const SimConfig& cfg,
                     Trajectory& traj) {
  Recorder rec(p, cfg, traj);
  const double h = cfg.step;
  const Policy pol = cfg.policy;

  const Eigen::VectorXd start = rec.start_state();
  Eigen::VectorXd xs = gather(start, p.s_canon);
  Eigen::VectorXd xe = gather(start, p.e_canon);  // physical, always current
  Eigen::VectorXd xr;                             // valid in reduced modes
  rec.row(cfg.start_step) = start;
  BoundaryInput us = p.u0_s;
  BoundaryInput ue = p.u0_e;
  Rk4Work work_s(xs.size());
  Rk4Work work_e(xe.size());
  std::optional<Rk4Work> work_r;
  auto model = p.ext;
  SwitchState sw{Mode::kFull, p.delta_max, 0.0, cfg.adaptive.t_th_max, p.ref_gen};
  Mode rep = Mode::kFull;  // representation held by the external area

  auto project = [&]() {
    xr = model->red.t * (xe - model->lin.x0);
    work_r.emplace(xr.size());
    const Eigen::VectorXd back = model->red.t * (model->red.t_inv * xr);
    return (back - xr).cwiseAbs().maxCoeff();
  };

  for (long k = cfg.start_step; k < p.num_steps; ++k) {
    const int c = p.config_of(k);
    double dd = kNaN;
    Mode next = Mode::kFull;
    switch (pol) {
      case Policy::kPartitionedFull:
        next = Mode::kFull;
        break;
      case Policy::kLinearOnly:
        next = Mode::kLinear;
        break;
      default: {
        dd = rec.delta_dev(k);
        const SwitchDecision dec = switch_mode(sw, c == 1, dd, h);
        if (c == 1) dd = kNaN;
        sw = dec.state;
        next = sw.mode;
        if (dec.relinearize) {
          try {
            Eigen::VectorXd op;
            LinearModel lin = relinearize(model->op, xe, ue, p.y_e[c], p.p_e, op);
            model = build_reduced(std::move(lin), std::move(op), &*p.sel,
                                  cfg.adaptive.hankel_tol, h);
            traj.relinearization_events.push_back(rec.time_of(k));
            double jump = 0.0;
            if (rep != Mode::kFull) {
              // Expansion point is the current state: xr = 0 lifts back to
              // xe exactly.
              xr = Eigen::VectorXd::Zero(model->red.r);
              work_r.emplace(xr.size());
              Eigen::VectorXd lifted = model->lin.x0;
              lifted.noalias() += model->red.t_inv * xr;
              jump = (lifted - xe).cwiseAbs().maxCoeff();
              xe = std::move(lifted);
            }
            traj.relinearization_continuity.push_back(jump);
          } catch (const NumericalError&) {
            traj.relinearization_failures.push_back(rec.time_of(k));
          }
          sw.t_th = 0.0;
        }
      }
    }
    if (next != rep) {
      double err = 0.0;
      if (rep == Mode::kFull) err = project();
      rec.log_switch(k, rep, next, err);
      rep = next;
    }

    p.ops[c]->exchange(xs, xe, us, ue);
    rk4_inplace(
        [&](const Eigen::VectorXd& s, Eigen::VectorXd& d) {
          rhs_full_into(s, p.y_s[c], us, p.p_s, d);
        },
        xs, h, work_s, k);
    switch (rep) {
      case Mode::kFull:
        rk4_inplace(
            [&](const Eigen::VectorXd& s, Eigen::VectorXd& d) {
              rhs_full_into(s, p.y_e[c], ue, p.p_e, d);
            },
            xe, h, work_e, k);
        break;
      case Mode::kHybrid:
        rk4_inplace(
            [&](const Eigen::VectorXd& s, Eigen::VectorXd& d) {
              d = rhs_hybrid(s, ue, *model->hyb, p.y_e[c], p.p_e);
            },
            xr, h, *work_r, k);
        break;
      case Mode::kLinear: {
        Eigen::VectorXd next_r = model->g_off;
        next_r.noalias() += model->prop.phi * xr;
        next_r.noalias() +=
            model->gamma_b * (ue.as_vector() - model->lin.u0.as_vector());
        xr = std::move(next_r);
        if (!xr.allFinite()) {
          throw NumericalError("non-finite state at step " + std::to_string(k));
        }
        break;
      }
    }
    if (rep != Mode::kFull) {
      xe = model->lin.x0;
      xe.noalias() += model->red.t_inv * xr;
    }
    auto row = rec.row(k + 1);
    scatter(xs, p.s_canon, row);
    scatter(xe, p.e_canon, row);
    if (!rec.finish_step(k, rep, dd)) break;
  }
}

}  // namespace

Trajectory Simulator::run() const {
  Trajectory traj;
  if (is_partitioned(cfg_.policy)) {
    run_partitioned(*prep_, cfg_, traj);
  } else {
    run_whole(*prep_, cfg_, traj);
  }
  return traj;
}

Trajectory run_simulation(const BusNetwork& net, const SimConfig& cfg) {
  return Simulator(net, cfg).run();
}

}  // namespace amr
