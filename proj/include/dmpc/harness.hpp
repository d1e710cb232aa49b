#pragma once

#include <barrier>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <thread>
#include <vector>

#include "dmpc/oracle.hpp"
#include "dmpc/scenario.hpp"

namespace dmpc {

// Aggregates one run; every field except the wall-time sidecar is derived
// from virtual time and seeded draws, so identical scenarios reproduce
// identical values to the bit.
struct RunMetrics {
  int steps = 0;
  bool j_defined = false;
  double J = 0.0;

  int violation_events = 0;  // sampling instants with a separation shortfall, per family
  double violations_per_step = 0.0;
  int collision_events = 0;  // instants with hulls actually overlapping, per family

  double timely_pct = 0.0;
  int fallback_steps = 0;
  double async_w_pct = 0.0;    // share of copy receptions substituted with stale data
  double async_avg_pct = 0.0;  // same for the averaging phase
  double compute_pct = 0.0;    // split of controller busy time
  double wait_pct = 0.0;
  double mean_consensus_residual = 0.0;

  std::uint64_t bus_sent = 0;
  std::uint64_t bus_dropped = 0;

  std::vector<double> step_wall_ms;  // measured host time; never in the summary
};

// Ground truth and controller view at one sampling instant.
struct StepRecord {
  int t = 0;
  std::vector<Vec> x_true;       // plant states at the instant
  std::vector<Vec> d_true;       // active plant disturbances
  std::vector<Vec> y;            // measurements
  std::vector<Vec> x_hat;        // estimates the controllers used
  std::vector<Vec> d_hat;
  std::vector<Vec> u_applied;    // input active over [t, t+1); committed at t-1
  std::vector<Vec> u_committed;  // input committed now for [t+1, t+2)
  std::vector<StepTelemetry> tel;
  double obs_x = 0.0, obs_y = 0.0;  // valid when the scenario has an obstacle
};

struct RunTrace {
  std::vector<StepRecord> steps;
  std::vector<Vec> x_end;  // plant states after the final interval
};

struct RunResult {
  RunMetrics metrics;
  RunTrace trace;
};

// Time-averaged closed-loop cost: the stage cost accumulated over the trace,
// weighted by the sampling interval and divided by the horizon length, so
// repeating a trace leaves the value unchanged.
inline double closed_loop_cost(const WeightSet& w, double dt, const std::vector<Vec>& x,
                               const std::vector<Vec>& u, const std::vector<Vec>& x_ref,
                               const std::vector<Vec>& u_ref) {
  require(dt > 0.0, "closed_loop_cost: dt must be positive");
  require(!x.empty(), "closed_loop_cost: empty trace");
  require(x.size() == u.size() && x.size() == x_ref.size() && x.size() == u_ref.size(),
          "closed_loop_cost: trace length mismatch");
  double sum = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t)
    sum += dt * stage_cost(w, x[t], u[t], x_ref[t], u_ref[t]);
  return sum / (static_cast<double>(x.size()) * dt);
}

struct SafetyCounts {
  int violation_events = 0;
  int collision_events = 0;
  int instants = 0;
};

// Scans position traces per sampling instant. Each of the two constraint
// families (inter-agent separation, obstacle clearance) contributes at most
// one violation event and one collision event per instant; a violation is a
// shortfall of the soft separation distance, a collision an overlap of the
// physical hulls.
inline SafetyCounts count_violations_and_collisions(
    const std::vector<std::vector<Eigen::Vector2d>>& pos,
    const std::vector<Eigen::Vector2d>& obs_pos, double d_min, double body_diameter,
    double obstacle_radius) {
  require(d_min > 0.0 && body_diameter > 0.0, "safety: thresholds must be positive");
  require(obs_pos.empty() || obs_pos.size() == pos.size(),
          "safety: obstacle trace length mismatch");
  const double obs_violate = d_min - 0.5 * body_diameter + obstacle_radius;
  const double obs_collide = 0.5 * body_diameter + obstacle_radius;

  SafetyCounts c;
  c.instants = static_cast<int>(pos.size());
  for (std::size_t t = 0; t < pos.size(); ++t) {
    bool pair_violation = false, pair_collision = false;
    const auto& p = pos[t];
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = i + 1; j < p.size(); ++j) {
        const double dist = (p[i] - p[j]).norm();
        pair_violation = pair_violation || dist < d_min;
        pair_collision = pair_collision || dist < body_diameter;
      }
    bool obs_violation = false, obs_collision = false;
    if (!obs_pos.empty())
      for (const auto& pi : p) {
        const double dist = (pi - obs_pos[t]).norm();
        obs_violation = obs_violation || dist < obs_violate;
        obs_collision = obs_collision || dist < obs_collide;
      }
    c.violation_events += (pair_violation ? 1 : 0) + (obs_violation ? 1 : 0);
    c.collision_events += (pair_collision ? 1 : 0) + (obs_collision ? 1 : 0);
  }
  return c;
}

// The deterministic digest of a run: everything here derives from virtual
// time and seeded draws, so equal scenarios serialize to equal bytes. Host
// wall times stay in their sidecar file.
inline Json summary_json(const ScenarioSpec& spec, const RunMetrics& m) {
  Json j;
  j["name"] = spec.name;
  j["seed"] = spec.seed;
  j["steps"] = m.steps;
  j["duration_s"] = spec.duration_s;
  j["j_defined"] = m.j_defined;
  if (m.j_defined)
    j["J"] = m.J;
  else
    j["J"] = nullptr;
  j["violation_events"] = m.violation_events;
  j["violations_per_step"] = m.violations_per_step;
  j["collision_events"] = m.collision_events;
  j["timely_pct"] = m.timely_pct;
  j["fallback_steps"] = m.fallback_steps;
  j["async_w_pct"] = m.async_w_pct;
  j["async_avg_pct"] = m.async_avg_pct;
  j["compute_pct"] = m.compute_pct;
  j["wait_pct"] = m.wait_pct;
  j["mean_consensus_residual"] = m.mean_consensus_residual;
  j["bus_sent"] = m.bus_sent;
  j["bus_dropped"] = m.bus_dropped;
  return j;
}

namespace detail {

// References for one control step: own and neighbor trajectories sampled
// over the horizon, plus the obstacle's scripted path.
inline std::vector<StepData> make_step_refs(const ScenarioSpec& spec,
                                            const ReferenceSchedule& sched,
                                            const CouplingGraph& graph, int t) {
  const int N = spec.horizon;
  std::vector<StepData> refs(spec.agents);
  for (int i = 0; i < spec.agents; ++i) {
    StepData& d = refs[i];
    d.x_ref.resize(N + 1);
    d.u_ref.resize(N);
    for (int tau = 0; tau <= N; ++tau) {
      const auto p = sched.sample(i, (t + tau) * spec.dt);
      d.x_ref[tau] = p.x_d;
      if (tau < N) d.u_ref[tau] = p.u_d;
    }
    for (int j : graph.neighbors(i)) {
      std::vector<Vec> w(N + 1);
      for (int tau = 0; tau <= N; ++tau) w[tau] = sched.sample(j, (t + tau) * spec.dt).x_d;
      d.w_ref.push_back(std::move(w));
    }
    if (spec.obstacle.active()) {
      d.obs_pos.resize(N + 1);
      for (int tau = 0; tau <= N; ++tau) d.obs_pos[tau] = spec.obstacle.position((t + tau) * spec.dt);
    }
  }
  return refs;
}

inline void write_run_csv(const ScenarioSpec& spec, const RunTrace& trace, std::ostream& os) {
  os << std::setprecision(17);
  os << "t,agent,time_s,px,py,yaw,vx,vy,vyaw,y_px,y_py,y_yaw,"
        "xh_px,xh_py,xh_yaw,xh_vx,xh_vy,xh_vyaw,dh_x,dh_y,dh_yaw,"
        "ua_x,ua_y,ua_yaw,uc_x,uc_y,uc_yaw,"
        "timely,fallback,async_w,async_avg,qp_iters,compute_ms,wait_ms,commit_ms,"
        "consensus_residual,obs_x,obs_y\n";
  for (const auto& r : trace.steps)
    for (int i = 0; i < spec.agents; ++i) {
      os << r.t << ',' << i << ',' << r.t * spec.dt;
      for (int a = 0; a < kStateDim; ++a) os << ',' << r.x_true[i](a);
      for (int a = 0; a < kOutputDim; ++a) os << ',' << r.y[i](a);
      for (int a = 0; a < kStateDim; ++a) os << ',' << r.x_hat[i](a);
      for (int a = 0; a < kInputDim; ++a) os << ',' << r.d_hat[i](a);
      for (int a = 0; a < kInputDim; ++a) os << ',' << r.u_applied[i](a);
      for (int a = 0; a < kInputDim; ++a) os << ',' << r.u_committed[i](a);
      const auto& tl = r.tel[i];
      os << ',' << (tl.timely ? 1 : 0) << ',' << (tl.fallback ? 1 : 0) << ',' << tl.async_w
         << ',' << tl.async_avg << ',' << tl.qp_iters << ',' << tl.compute_ms << ','
         << tl.wait_ms << ',' << tl.commit_ms << ',' << tl.consensus_residual;
      if (spec.obstacle.active())
        os << ',' << r.obs_x << ',' << r.obs_y << '\n';
      else
        os << ",,\n";
    }
}

inline void write_logs(const ScenarioSpec& spec, const RunResult& r, const MessageBus* bus,
                       const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  save_scenario(spec, (fs::path(out_dir) / "scenario.json").string());

  std::ofstream log(fs::path(out_dir) / "run_log.csv");
  require(log.good(), "harness: cannot write run_log.csv");
  write_run_csv(spec, r.trace, log);

  std::ofstream summary(fs::path(out_dir) / "summary.json");
  require(summary.good(), "harness: cannot write summary.json");
  summary << summary_json(spec, r.metrics).dump(2) << "\n";

  if (bus) {
    std::ofstream events(fs::path(out_dir) / "bus_events.csv");
    require(events.good(), "harness: cannot write bus_events.csv");
    events << std::setprecision(17);
    bus->write_event_csv(events);
  }

  std::ofstream wall(fs::path(out_dir) / "wall_times.csv");
  require(wall.good(), "harness: cannot write wall_times.csv");
  wall << "t,wall_ms\n" << std::setprecision(6);
  for (std::size_t t = 0; t < r.metrics.step_wall_ms.size(); ++t)
    wall << t << ',' << r.metrics.step_wall_ms[t] << '\n';
}

// Drives the plant/estimator/reference machinery around any controller fleet;
// `step_all` maps (t, estimates, refs, start_ms, telemetry*) to the committed
// inputs. Fills `out` in place so the trace recorded so far survives a throw.
template <typename StepAll>
void run_closed_loop(const ScenarioSpec& spec, StepAll&& step_all, RunResult& out) {
  spec.validate();
  const DiscreteModel model = zoh_discretize(spec.dt);
  const ExtendedModel emodel = extend_with_disturbance(model);
  const CouplingGraph graph = spec.graph();
  const WeightSet weights = build_weights(graph, model, spec.weight_config());
  const ReferenceSchedule sched = spec.reference.build();
  const int n = spec.steps();

  std::vector<Plant> plants;
  std::vector<DisturbanceEstimator> estimators;
  for (int i = 0; i < spec.agents; ++i) {
    plants.emplace_back(model, spec.starts[i].x0, spec.starts[i].d,
                        stream_seed(spec.seed, 0x70a, i), spec.noise.process());
    ExtendedState init;
    init.x() = spec.starts[i].x0;  // scripted start; the disturbance stays zero-init
    estimators.emplace_back(emodel, init);
  }

  out = RunResult{};
  std::vector<std::vector<Eigen::Vector2d>> safety_pos;
  std::vector<Eigen::Vector2d> safety_obs;
  std::vector<Vec> cost_x, cost_u, cost_xref, cost_uref;
  std::vector<bool> event_done(spec.events.size(), false);

  Vec zero_u = Vec::Zero(kInputDim);
  std::vector<Vec> applied(spec.agents, zero_u);       // input over [t, t+1)
  std::vector<Vec> applied_prev(spec.agents, zero_u);  // input over [t-1, t)
  std::vector<StepTelemetry> tel(spec.agents);

  for (int t = 0; t < n; ++t) {
    StepRecord rec;
    rec.t = t;
    if (spec.obstacle.active()) {
      const auto op = spec.obstacle.position(t * spec.dt);
      rec.obs_x = op(0);
      rec.obs_y = op(1);
    }

    std::vector<ExtendedState> estimates;
    for (int i = 0; i < spec.agents; ++i) {
      rec.x_true.push_back(plants[i].state());
      rec.d_true.push_back(plants[i].disturbance());
      rec.y.push_back(plants[i].measure(spec.noise.sensor()));
      if (t > 0) estimators[i].step(applied_prev[i], rec.y.back());
      estimates.push_back(estimators[i].estimate());
      rec.x_hat.push_back(estimates.back().x());
      rec.d_hat.push_back(estimates.back().d());
    }

    const auto refs = make_step_refs(spec, sched, graph, t);
    const auto wall0 = std::chrono::steady_clock::now();
    std::vector<Vec> committed = step_all(t, estimates, refs, t * spec.dt * 1000.0, &tel);
    const auto wall1 = std::chrono::steady_clock::now();
    out.metrics.step_wall_ms.push_back(
        std::chrono::duration<double, std::milli>(wall1 - wall0).count());

    rec.u_applied = applied;
    rec.u_committed = committed;
    rec.tel = tel;

    // Stage cost uses the true state and the input actually active now.
    Vec x_all(kStateDim * spec.agents), u_all(kInputDim * spec.agents);
    Vec xr_all(kStateDim * spec.agents), ur_all(kInputDim * spec.agents);
    for (int i = 0; i < spec.agents; ++i) {
      x_all.segment(kStateDim * i, kStateDim) = rec.x_true[i];
      u_all.segment(kInputDim * i, kInputDim) = applied[i];
      const auto p = sched.sample(i, t * spec.dt);
      xr_all.segment(kStateDim * i, kStateDim) = p.x_d;
      ur_all.segment(kInputDim * i, kInputDim) = p.u_d;
    }
    cost_x.push_back(std::move(x_all));
    cost_u.push_back(std::move(u_all));
    cost_xref.push_back(std::move(xr_all));
    cost_uref.push_back(std::move(ur_all));

    // Scripted disturbance changes land at the interval they fall into.
    for (std::size_t e = 0; e < spec.events.size(); ++e)
      if (!event_done[e] && spec.events[e].t <= t * spec.dt + 1e-9) {
        plants[spec.events[e].agent].set_disturbance(spec.events[e].d);
        event_done[e] = true;
      }

    for (int i = 0; i < spec.agents; ++i) plants[i].step(applied[i]);
    applied_prev = applied;
    applied = committed;

    std::vector<Eigen::Vector2d> p;
    for (int i = 0; i < spec.agents; ++i) p.emplace_back(plants[i].state()(0), plants[i].state()(1));
    safety_pos.push_back(std::move(p));
    if (spec.obstacle.active()) safety_obs.push_back(spec.obstacle.position((t + 1) * spec.dt));

    out.trace.steps.push_back(std::move(rec));
  }
  for (int i = 0; i < spec.agents; ++i) out.trace.x_end.push_back(plants[i].state());

  // Aggregation; all zero for the degenerate empty run.
  RunMetrics& m = out.metrics;
  m.steps = n;
  if (n > 0) {
    m.j_defined = true;
    m.J = closed_loop_cost(weights, spec.dt, cost_x, cost_u, cost_xref, cost_uref);

    const auto safety =
        count_violations_and_collisions(safety_pos, safety_obs, spec.bounds.d_min,
                                        spec.bounds.body_diameter, spec.obstacle.radius);
    m.violation_events = safety.violation_events;
    m.violations_per_step = static_cast<double>(safety.violation_events) / n;
    m.collision_events = safety.collision_events;

    std::uint64_t timely = 0, fallback = 0, async_w = 0, async_avg = 0;
    double compute = 0.0, wait = 0.0, residual = 0.0;
    for (const auto& r : out.trace.steps)
      for (const auto& tl : r.tel) {
        timely += tl.timely ? 1 : 0;
        fallback += tl.fallback ? 1 : 0;
        async_w += tl.async_w;
        async_avg += tl.async_avg;
        compute += tl.compute_ms;
        wait += tl.wait_ms;
        residual += tl.consensus_residual;
      }
    const double agent_steps = static_cast<double>(n) * spec.agents;
    m.timely_pct = 100.0 * static_cast<double>(timely) / agent_steps;
    m.fallback_steps = static_cast<int>(fallback);

    double degree_sum = 0.0;
    for (int i = 0; i < spec.agents; ++i) degree_sum += static_cast<double>(graph.degree(i));
    const double expected = static_cast<double>(n) * spec.k_max * spec.l_max * degree_sum;
    m.async_w_pct = expected > 0.0 ? 100.0 * static_cast<double>(async_w) / expected : 0.0;
    m.async_avg_pct = expected > 0.0 ? 100.0 * static_cast<double>(async_avg) / expected : 0.0;

    const double busy = compute + wait;
    m.compute_pct = busy > 0.0 ? 100.0 * compute / busy : 0.0;
    m.wait_pct = busy > 0.0 ? 100.0 * wait / busy : 0.0;
    m.mean_consensus_residual = residual / agent_steps;
  }
}

// Phase-lockstep driver running each agent on its own thread; the barrier
// reproduces the virtual-mode phase schedule while the bus carries the
// cross-thread traffic. Used by the wall-clock demo.
template <typename ControllerSeq>
std::vector<Vec> drti_step_concurrent(ControllerSeq& cs, MessageBus& bus, int t,
                                      const std::vector<ExtendedState>& estimates,
                                      const std::vector<StepData>& refs, double step_start_ms,
                                      std::vector<StepTelemetry>* telemetry) {
  const int S = static_cast<int>(cs.size());
  const int k_max = cs.front().settings().k_max;
  const int l_max = cs.front().settings().l_max;
  bus.set_epoch(t);
  std::barrier sync(S);
  std::vector<Vec> committed(S);
  if (telemetry) telemetry->resize(S);

  auto worker = [&](int i) {
    cs[i].begin_step(t, estimates[i], refs[i], step_start_ms);
    sync.arrive_and_wait();
    for (int k = 0; k < k_max; ++k) {
      cs[i].begin_outer();
      sync.arrive_and_wait();
      for (int l = 0; l < l_max; ++l) {
        cs[i].solve_and_send(bus);
        sync.arrive_and_wait();
        cs[i].exchange_and_average(bus);
        sync.arrive_and_wait();
        cs[i].collect_and_update(bus);
        sync.arrive_and_wait();
      }
      cs[i].end_outer();
      sync.arrive_and_wait();
    }
    committed[i] = cs[i].finish_step(telemetry ? &(*telemetry)[i] : nullptr);
  };

  std::vector<std::thread> threads;
  for (int i = 0; i < S; ++i) threads.emplace_back(worker, i);
  for (auto& th : threads) th.join();
  return committed;
}

}  // namespace detail

enum class DriveMode {
  Virtual,    // single-thread lockstep, fully deterministic
  WallClock,  // one thread per agent, steps paced to real sampling instants
};

// Full decentralized closed loop. With an output directory the run leaves
// scenario.json, run_log.csv, bus_events.csv, summary.json, and the
// wall-time sidecar behind; partial logs survive a mid-run abort.
inline RunResult run_scenario(const ScenarioSpec& spec, const std::string& out_dir = "",
                              DriveMode mode = DriveMode::Virtual) {
  spec.validate();
  const DiscreteModel model = zoh_discretize(spec.dt);
  const CouplingGraph graph = spec.graph();
  const WeightSet weights = build_weights(graph, model, spec.weight_config());
  const ControllerSettings settings = spec.controller_settings();

  MessageBus bus(graph, spec.network.build(), stream_seed(spec.seed, 0xb05));
  std::deque<DrtiController> cs;
  for (int i = 0; i < spec.agents; ++i)
    cs.emplace_back(graph, i, spec.horizon, model, weights, spec.bounds,
                    spec.obstacle.active(), spec.obstacle.radius, settings);
  for (int i = 0; i < spec.agents; ++i) {
    std::map<int, Vec> nbr;
    for (int j : graph.neighbors(i)) nbr[j] = spec.starts[j].x0;
    cs[i].initialize(spec.starts[i].x0, nbr);
  }

  const auto wall_start = std::chrono::steady_clock::now();
  auto step_all = [&](int t, const std::vector<ExtendedState>& estimates,
                      const std::vector<StepData>& refs, double start_ms,
                      std::vector<StepTelemetry>* tel) {
    if (mode == DriveMode::WallClock) {
      std::this_thread::sleep_until(wall_start + std::chrono::duration<double>(t * spec.dt));
      return detail::drti_step_concurrent(cs, bus, t, estimates, refs, start_ms, tel);
    }
    return drti_step_all(cs, bus, t, estimates, refs, start_ms, tel);
  };

  RunResult r;
  try {
    detail::run_closed_loop(spec, step_all, r);
  } catch (...) {
    if (!out_dir.empty()) detail::write_logs(spec, r, &bus, out_dir);
    throw;
  }
  r.metrics.bus_sent = bus.sent();
  r.metrics.bus_dropped = bus.dropped();
  if (!out_dir.empty()) detail::write_logs(spec, r, &bus, out_dir);
  return r;
}

// Same closed loop driven by the centralized solver; the reference other
// implementations are compared against. Network effects do not apply.
inline RunResult run_baseline(const ScenarioSpec& spec, const std::string& out_dir = "") {
  spec.validate();
  const DiscreteModel model = zoh_discretize(spec.dt);
  const CouplingGraph graph = spec.graph();
  const WeightSet weights = build_weights(graph, model, spec.weight_config());

  CentralizedMpc mpc(graph, spec.horizon, model, weights, spec.bounds,
                     std::vector<bool>(spec.agents, spec.obstacle.active()),
                     spec.obstacle.radius);
  std::vector<Vec> x0;
  for (const auto& s : spec.starts) x0.push_back(s.x0);
  mpc.initialize(x0);

  auto step_all = [&](int /*t*/, const std::vector<ExtendedState>& estimates,
                      const std::vector<StepData>& refs, double /*start_ms*/,
                      std::vector<StepTelemetry>* tel) {
    auto committed = mpc.step(estimates, refs);
    if (tel) {
      tel->assign(estimates.size(), StepTelemetry{});
      for (auto& tl : *tel) tl.timely = true;
    }
    return committed;
  };

  RunResult r;
  try {
    detail::run_closed_loop(spec, step_all, r);
  } catch (...) {
    if (!out_dir.empty()) detail::write_logs(spec, r, nullptr, out_dir);
    throw;
  }
  if (!out_dir.empty()) detail::write_logs(spec, r, nullptr, out_dir);
  return r;
}

}  // namespace dmpc
