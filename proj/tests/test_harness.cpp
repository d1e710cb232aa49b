#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "dmpc/harness.hpp"

using namespace dmpc;
using Catch::Approx;

namespace {

WeightSet tiny_weights(const CouplingGraph& g, const DiscreteModel& m) {
  WeightConfig cfg;
  cfg.q_diag.assign(g.size(), (Vec(kStateDim) << 28, 28, 18, 18, 40, 18).finished());
  cfg.q_couple_diag = (Vec(kStateDim) << 14, 14, 9, 9, 20, 9).finished();
  cfg.r_diag = (Vec(kInputDim) << 0.1, 0.1, 0.1).finished();
  return build_weights(g, m, cfg);
}

// Small off-catalog scenario sized for unit tests: two coupled agents on the
// default table, short horizon.
ScenarioSpec tiny_scenario() {
  ScenarioSpec s;
  s.name = "tiny";
  s.agents = 2;
  s.edges = {{0, 1}};
  s.dt = 0.05;
  s.horizon = 5;
  s.custom_timing = true;
  s.duration_s = 1.0;
  s.l_max = 5;
  s.q_diag = fleet_q_diag(2);
  s.q_couple_diag = (Vec(kStateDim) << 14, 14, 9, 9, 20, 9).finished();
  s.r_diag = (Vec(kInputDim) << 0.1, 0.1, 0.1).finished();
  s.network.profile = "perfect";
  AgentStart a, b;
  a.x0(0) = 0.3;
  a.x0(1) = 0.3;
  b.x0(0) = 0.7;
  b.x0(1) = 0.3;
  s.starts = {a, b};
  s.reference.waypoints = {{Waypoint{0.0, 0.35, 0.25, 0.0}}, {Waypoint{0.0, 0.65, 0.35, 0.0}}};
  return s;
}

}  // namespace

TEST_CASE("the averaged cost is zero on the references and follows the formula") {
  const auto model = zoh_discretize(0.05);
  const CouplingGraph g(1, {});
  const auto w = tiny_weights(g, model);

  Vec x = Vec::Zero(kStateDim), u = Vec::Zero(kInputDim);
  CHECK(closed_loop_cost(w, 0.05, {x}, {u}, {x}, {u}) == 0.0);

  // One meter of x-position error under the heavier state weight: stage cost
  // comes out at half the leading weight entry.
  Vec xe = x;
  xe(0) += 1.0;
  const double j_one = closed_loop_cost(w, 0.05, {xe}, {u}, {x}, {u});
  CHECK(j_one == Approx(14.0).margin(1e-12));

  // Repeating the trace doubles both the sum and the horizon.
  const double j_two = closed_loop_cost(w, 0.05, {xe, xe}, {u, u}, {x, x}, {u, u});
  CHECK(j_two == Approx(j_one).margin(1e-12));

  CHECK_THROWS_AS(closed_loop_cost(w, 0.05, {xe, xe}, {u}, {x}, {u}), ConfigError);
}

TEST_CASE("violation and collision counting follows the hull thresholds") {
  auto at = [](double d) {
    return std::vector<Eigen::Vector2d>{{0.0, 0.0}, {d, 0.0}};
  };

  auto clean = count_violations_and_collisions({at(0.25), at(0.21)}, {}, 0.2, 0.15, 0.0);
  CHECK(clean.violation_events == 0);
  CHECK(clean.collision_events == 0);

  auto near = count_violations_and_collisions({at(0.19)}, {}, 0.2, 0.15, 0.0);
  CHECK(near.violation_events == 1);
  CHECK(near.collision_events == 0);

  auto overlap = count_violations_and_collisions({at(0.14)}, {}, 0.2, 0.15, 0.0);
  CHECK(overlap.violation_events == 1);
  CHECK(overlap.collision_events == 1);

  // Obstacle clearance is its own family: matching radii give the same
  // 200 mm / 150 mm thresholds, and both families can fire at one instant.
  auto both = count_violations_and_collisions({at(0.19)}, {Eigen::Vector2d(0.0, 0.19)}, 0.2,
                                              0.15, 0.075);
  CHECK(both.violation_events == 2);
  CHECK(both.collision_events == 0);
}

TEST_CASE("a short run reproduces byte-identical summaries and sane metrics") {
  ScenarioSpec s = tiny_scenario();
  s.noise.enabled = true;
  s.network.profile = "custom";
  s.network.base_ms = 1.0;
  s.network.jitter_mean_ms = 1.0;
  s.network.drop_prob = 0.2;
  s.seed = 42;

  const RunResult a = run_scenario(s);
  const RunResult b = run_scenario(s);
  CHECK(summary_json(s, a.metrics).dump(2) == summary_json(s, b.metrics).dump(2));

  ScenarioSpec other = s;
  other.seed = 43;
  const RunResult c = run_scenario(other);
  CHECK(summary_json(other, c.metrics).dump(2) != summary_json(s, a.metrics).dump(2));

  const RunMetrics& m = a.metrics;
  CHECK(m.j_defined);
  CHECK(m.J >= 0.0);
  for (double pct : {m.timely_pct, m.async_w_pct, m.async_avg_pct, m.compute_pct, m.wait_pct}) {
    CHECK(pct >= 0.0);
    CHECK(pct <= 100.0);
  }
  CHECK(m.compute_pct + m.wait_pct == Approx(100.0));
  CHECK(m.steps == 20);
  CHECK(m.bus_sent > 0);
  CHECK(m.bus_dropped > 0);  // 20% drops over hundreds of sends
  CHECK(m.async_w_pct > 0.0);
}

TEST_CASE("the empty run flags an undefined cost") {
  ScenarioSpec s = tiny_scenario();
  s.duration_s = 0.0;
  const RunResult r = run_scenario(s);
  CHECK(r.metrics.steps == 0);
  CHECK_FALSE(r.metrics.j_defined);
  CHECK(r.trace.steps.empty());
  const Json j = summary_json(s, r.metrics);
  CHECK(j["J"].is_null());
  CHECK(j["violation_events"] == 0);
}

TEST_CASE("actuation applies the input committed one step earlier") {
  const RunResult r = run_scenario(tiny_scenario());
  REQUIRE(r.trace.steps.size() == 20);
  for (int i = 0; i < 2; ++i) CHECK(r.trace.steps[0].u_applied[i].norm() == 0.0);
  for (std::size_t t = 1; t < r.trace.steps.size(); ++t)
    for (int i = 0; i < 2; ++i)
      CHECK((r.trace.steps[t].u_applied[i] - r.trace.steps[t - 1].u_committed[i]).norm() ==
            0.0);
}

TEST_CASE("disturbance events switch the plant mid-run") {
  ScenarioSpec s = tiny_scenario();
  s.events.push_back({0.25, 0, (Vec(kInputDim) << 0.5, 0.0, 0.0).finished()});
  const RunResult r = run_scenario(s);
  CHECK(r.trace.steps[4].d_true[0].norm() == 0.0);
  CHECK(r.trace.steps[6].d_true[0](0) == 0.5);
  CHECK(r.trace.steps[6].d_true[1].norm() == 0.0);
}

TEST_CASE("baseline and decentralized closed loops agree without coupling") {
  ScenarioSpec s = tiny_scenario();
  s.agents = 1;
  s.edges.clear();
  s.q_diag = fleet_q_diag(1);
  s.starts = {s.starts[0]};
  s.reference.waypoints = {s.reference.waypoints[0]};
  s.duration_s = 0.5;
  // A lone agent's inner loop contracts like a proximal-point method, so a
  // soft consensus penalty and a deep budget stand in for exact convergence.
  s.rho = 0.5;
  s.l_max = 80;

  const RunResult d = run_scenario(s);
  const RunResult b = run_baseline(s);
  REQUIRE(d.trace.steps.size() == b.trace.steps.size());
  for (std::size_t t = 0; t < d.trace.steps.size(); ++t) {
    const Vec diff = d.trace.steps[t].u_committed[0] - b.trace.steps[t].u_committed[0];
    CHECK(diff.lpNorm<Eigen::Infinity>() < 2e-3);
  }
  CHECK(b.metrics.timely_pct == 100.0);
}

TEST_CASE("the wall-clock drive reproduces virtual-mode inputs on a perfect network") {
  ScenarioSpec s = tiny_scenario();
  s.duration_s = 0.25;
  s.l_max = 3;
  const RunResult v = run_scenario(s, "", DriveMode::Virtual);
  const RunResult w = run_scenario(s, "", DriveMode::WallClock);
  REQUIRE(v.trace.steps.size() == w.trace.steps.size());
  for (std::size_t t = 0; t < v.trace.steps.size(); ++t)
    for (int i = 0; i < s.agents; ++i)
      CHECK((v.trace.steps[t].u_committed[i] - w.trace.steps[t].u_committed[i]).norm() == 0.0);
}

TEST_CASE("run logs land on disk with the documented files") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "dmpc_harness_logs";
  fs::remove_all(dir);

  ScenarioSpec s = tiny_scenario();
  const RunResult r = run_scenario(s, dir.string());

  for (const char* f :
       {"scenario.json", "run_log.csv", "summary.json", "bus_events.csv", "wall_times.csv"})
    CHECK(fs::exists(dir / f));

  std::ifstream log(dir / "run_log.csv");
  std::string line;
  int lines = 0;
  bool header_ok = false;
  while (std::getline(log, line)) {
    if (lines == 0) header_ok = line.rfind("t,agent,time_s", 0) == 0;
    ++lines;
  }
  CHECK(header_ok);
  CHECK(lines == 1 + s.steps() * s.agents);

  std::ifstream sum(dir / "summary.json");
  Json j;
  sum >> j;
  CHECK(j["steps"] == r.metrics.steps);
  CHECK(j.contains("J"));

  fs::remove_all(dir);
}
