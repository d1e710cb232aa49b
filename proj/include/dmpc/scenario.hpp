#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmpc/controller.hpp"
#include "dmpc/obstacle.hpp"
#include "dmpc/plant.hpp"
#include "dmpc/reference.hpp"
#include "dmpc/weights.hpp"

namespace dmpc {

using Json = nlohmann::ordered_json;

// Link parameters either by catalog name or as explicit numbers. The named
// profiles are the two communication setups the experiments compare, plus an
// idealized zero-latency link for tests.
struct NetworkSpec {
  std::string profile = "offboard";  // perfect | offboard | onboard | custom
  double base_ms = 0.0;
  double jitter_mean_ms = 0.0;
  double drop_prob = 0.0;

  LinkProfile build() const {
    if (profile == "perfect") return LinkProfile::perfect();
    if (profile == "offboard") return LinkProfile::offboard();
    if (profile == "onboard") return LinkProfile::onboard();
    require(profile == "custom", "scenario: unknown network profile '" + profile + "'");
    return LinkProfile{base_ms, jitter_mean_ms, drop_prob};
  }
};

// Measurement and actuation-side noise switches. Disabled runs are exactly
// reproducible snapshots of the nominal model; enabled runs stay reproducible
// through the scenario seed.
struct NoiseSpec {
  bool enabled = false;
  double pos_std = 1e-3;          // meters, tracking-camera accuracy class
  double yaw_std = 2e-3;          // radians
  double process_vel_std = 1e-3;  // per-step velocity random walk, m/s

  SensorNoise sensor() const {
    return enabled ? SensorNoise{pos_std, yaw_std} : SensorNoise::off();
  }
  double process() const { return enabled ? process_vel_std : 0.0; }
};

struct AgentStart {
  Vec x0 = Vec::Zero(kStateDim);
  Vec d = Vec::Zero(kInputDim);  // constant input-side disturbance, truth
};

// Scripted change of one agent's true disturbance at a given time; exercises
// the observer transient without touching the controller.
struct DisturbanceEvent {
  double t = 0.0;
  int agent = 0;
  Vec d = Vec::Zero(kInputDim);
};

// Serializable description of the reference motion; build() produces the
// sampled schedule the harness queries each step.
struct ReferenceSpec {
  enum class Kind { Setpoints, Clover };
  Kind kind = Kind::Setpoints;

  std::vector<std::vector<Waypoint>> waypoints;  // setpoints: one list per agent

  double amplitude = 0.35;  // clover petal length
  double lap_s = 15.0;
  double cx = 0.6, cy = 0.5;
  std::vector<Eigen::Vector2d> offsets;  // per-agent formation offset

  ReferenceSchedule build() const {
    if (kind == Kind::Setpoints) return ReferenceSchedule::setpoints(waypoints);
    return ReferenceSchedule::clover(static_cast<int>(offsets.size()), amplitude, lap_s, cx,
                                     cy, offsets);
  }

  int agents() const {
    return kind == Kind::Setpoints ? static_cast<int>(waypoints.size())
                                   : static_cast<int>(offsets.size());
  }
};

// Everything one closed-loop run depends on. Round-trips through JSON so a
// run is reproducible from a single file plus the binary.
struct ScenarioSpec {
  std::string name = "custom";

  int agents = 0;
  std::vector<std::pair<int, int>> edges;

  // Sampling interval and horizon come as a pair; the two catalog designs are
  // (50 ms, 20) and (150 ms, 7). Anything else must be acknowledged as custom.
  double dt = 0.05;
  int horizon = 20;
  bool custom_timing = false;

  double duration_s = 0.0;  // multiple of dt; 0 is the degenerate empty run

  int k_max = 1;
  int l_max = 30;
  double rho = 4.0;
  double mu = 1e5;

  std::vector<Vec> q_diag;  // per-agent state weight diagonal
  Vec q_couple_diag = Vec::Zero(kStateDim);
  Vec r_diag = Vec::Zero(kInputDim);

  BoundsConfig bounds;

  NetworkSpec network;
  NoiseSpec noise;

  // Controller timing and the virtual compute-cost model.
  double max_wait_ms = 25.0;
  double deadline_fraction = 0.75;
  bool shifted_warm_start = false;
  double qp_base_ms = 0.2;
  double qp_iter_ms = 0.12;
  double overhead_ms = 0.2;
  // Emulates a slow controller: the step is stretched to at least this share
  // of the sampling interval before its result is committed.
  double forced_delay_fraction = 0.0;

  ReferenceSpec reference;
  ObstacleMotion obstacle;

  std::vector<AgentStart> starts;
  std::vector<DisturbanceEvent> events;

  std::uint64_t seed = 1;

  int steps() const { return static_cast<int>(std::llround(duration_s / dt)); }

  CouplingGraph graph() const { return CouplingGraph(agents, edges); }

  WeightConfig weight_config() const {
    return WeightConfig{q_diag, q_couple_diag, r_diag, mu, rho};
  }

  ControllerSettings controller_settings() const {
    ControllerSettings s;
    s.k_max = k_max;
    s.l_max = l_max;
    s.rho = rho;
    s.max_wait_ms = max_wait_ms;
    s.deadline_fraction = deadline_fraction;
    s.shifted_warm_start = shifted_warm_start;
    s.qp_base_ms = qp_base_ms;
    s.qp_iter_ms = qp_iter_ms;
    s.overhead_ms = overhead_ms;
    s.forced_delay_fraction = forced_delay_fraction;
    return s;
  }

  void validate() const {
    require(agents >= 1, "scenario: need at least one agent");
    graph();  // validates the edge list

    require(dt > 0.0 && horizon >= 2, "scenario: dt must be positive, horizon at least 2");
    const bool catalog = (dt == 0.05 && horizon == 20) || (dt == 0.15 && horizon == 7);
    require(catalog || custom_timing,
            "scenario: (dt, horizon) is not a catalog design; set custom_timing to confirm");

    require(duration_s >= 0.0, "scenario: duration must be nonnegative");
    const double rem = std::abs(duration_s - steps() * dt);
    require(rem <= 1e-6, "scenario: duration must be a multiple of dt");

    require(k_max >= 1 && l_max >= 1, "scenario: iteration budgets must be positive");
    require(rho > 0.0 && mu > 0.0, "scenario: penalties must be positive");

    require(static_cast<int>(q_diag.size()) == agents, "scenario: one q_diag per agent");
    for (const auto& q : q_diag)
      require(q.size() == kStateDim && q.minCoeff() > 0.0,
              "scenario: q_diag entries must be positive with size 6");
    require(q_couple_diag.size() == kStateDim && q_couple_diag.minCoeff() >= 0.0,
            "scenario: q_couple_diag must be nonnegative with size 6");
    require(r_diag.size() == kInputDim && r_diag.minCoeff() > 0.0,
            "scenario: r_diag must be positive with size 3");

    require(bounds.d_min > 0.0, "scenario: d_min must be positive");
    require(bounds.body_diameter > 0.0 && bounds.margin >= 0.0,
            "scenario: body and margin must be sane");
    require(bounds.x_lo() < bounds.x_hi() && bounds.y_lo() < bounds.y_hi(),
            "scenario: table leaves no admissible area");
    require(bounds.u_max.size() == kInputDim && bounds.u_max.minCoeff() > 0.0,
            "scenario: input bounds must be positive");

    require(network.base_ms >= 0.0 && network.jitter_mean_ms >= 0.0,
            "scenario: link latency must be nonnegative");
    require(network.drop_prob >= 0.0 && network.drop_prob <= 1.0,
            "scenario: drop probability must be in [0,1]");
    network.build();

    require(noise.pos_std >= 0.0 && noise.yaw_std >= 0.0 && noise.process_vel_std >= 0.0,
            "scenario: noise levels must be nonnegative");

    require(max_wait_ms >= 0.0, "scenario: max_wait_ms must be nonnegative");
    require(deadline_fraction > 0.0 && deadline_fraction <= 1.0,
            "scenario: deadline_fraction must be in (0,1]");
    require(qp_base_ms >= 0.0 && qp_iter_ms >= 0.0 && overhead_ms >= 0.0,
            "scenario: compute-cost model must be nonnegative");
    require(forced_delay_fraction >= 0.0 && forced_delay_fraction <= 1.0,
            "scenario: forced_delay_fraction must be in [0,1]");

    require(reference.agents() == agents, "scenario: reference must cover every agent");
    reference.build();

    if (obstacle.active()) {
      require(obstacle.radius > 0.0, "scenario: obstacle radius must be positive");
      if (obstacle.kind == ObstacleMotion::Kind::Circular ||
          obstacle.kind == ObstacleMotion::Kind::Linear)
        require(obstacle.period_s > 0.0, "scenario: obstacle period must be positive");
    }

    require(static_cast<int>(starts.size()) == agents, "scenario: one start per agent");
    for (const auto& s : starts) {
      require(s.x0.size() == kStateDim && s.x0.allFinite(),
              "scenario: start state must be finite with size 6");
      require(s.d.size() == kInputDim && s.d.allFinite(),
              "scenario: start disturbance must be finite with size 3");
    }
    for (const auto& e : events) {
      require(e.t >= 0.0, "scenario: event time must be nonnegative");
      require(e.agent >= 0 && e.agent < agents, "scenario: event agent out of range");
      require(e.d.size() == kInputDim && e.d.allFinite(),
              "scenario: event disturbance must be finite with size 3");
    }
  }
};

namespace detail {

inline void expect_keys(const Json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
  require(j.is_object(), "scenario: " + where + " must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    require(known, "scenario: unknown key '" + item.key() + "' in " + where);
  }
}

inline const Json& need(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  require(it != j.end(), "scenario: missing key '" + std::string(key) + "' in " + where);
  return *it;
}

inline double num(const Json& v, const std::string& where) {
  require(v.is_number(), "scenario: " + where + " must be a number");
  return v.get<double>();
}

inline Vec vec_of(const Json& v, int n, const std::string& where) {
  require(v.is_array() && static_cast<int>(v.size()) == n,
          "scenario: " + where + " must be an array of " + std::to_string(n) + " numbers");
  Vec out(n);
  for (int i = 0; i < n; ++i) out(i) = num(v[i], where);
  return out;
}

inline Json to_array(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace detail

inline Json scenario_to_json(const ScenarioSpec& s) {
  using detail::to_array;
  Json j;
  j["name"] = s.name;
  j["agents"] = s.agents;
  Json edges = Json::array();
  for (const auto& e : s.edges) edges.push_back(Json::array({e.first, e.second}));
  j["edges"] = edges;
  j["dt"] = s.dt;
  j["horizon"] = s.horizon;
  if (s.custom_timing) j["custom_timing"] = true;
  j["duration_s"] = s.duration_s;
  j["k_max"] = s.k_max;
  j["l_max"] = s.l_max;
  j["rho"] = s.rho;
  j["mu"] = s.mu;

  Json q = Json::array();
  for (const auto& d : s.q_diag) q.push_back(to_array(d));
  j["q_diag"] = q;
  j["q_couple_diag"] = to_array(s.q_couple_diag);
  j["r_diag"] = to_array(s.r_diag);

  j["geometry"] = Json{{"table_x", Json::array({s.bounds.table_x0, s.bounds.table_x1})},
                       {"table_y", Json::array({s.bounds.table_y0, s.bounds.table_y1})},
                       {"margin", s.bounds.margin},
                       {"body_diameter", s.bounds.body_diameter},
                       {"d_min", s.bounds.d_min},
                       {"u_max", to_array(s.bounds.u_max)}};

  Json net{{"profile", s.network.profile}};
  if (s.network.profile == "custom") {
    net["base_ms"] = s.network.base_ms;
    net["jitter_mean_ms"] = s.network.jitter_mean_ms;
    net["drop_prob"] = s.network.drop_prob;
  }
  j["network"] = net;

  j["noise"] = Json{{"enabled", s.noise.enabled},
                    {"pos_std", s.noise.pos_std},
                    {"yaw_std", s.noise.yaw_std},
                    {"process_vel_std", s.noise.process_vel_std}};

  j["controller"] = Json{{"max_wait_ms", s.max_wait_ms},
                         {"deadline_fraction", s.deadline_fraction},
                         {"shifted_warm_start", s.shifted_warm_start},
                         {"qp_base_ms", s.qp_base_ms},
                         {"qp_iter_ms", s.qp_iter_ms},
                         {"overhead_ms", s.overhead_ms},
                         {"forced_delay_fraction", s.forced_delay_fraction}};

  Json ref;
  if (s.reference.kind == ReferenceSpec::Kind::Setpoints) {
    ref["type"] = "setpoints";
    Json all = Json::array();
    for (const auto& per : s.reference.waypoints) {
      Json list = Json::array();
      for (const auto& w : per)
        list.push_back(Json{{"t", w.t}, {"px", w.px}, {"py", w.py}, {"yaw", w.yaw}});
      all.push_back(list);
    }
    ref["waypoints"] = all;
  } else {
    ref["type"] = "clover";
    ref["amplitude"] = s.reference.amplitude;
    ref["lap_s"] = s.reference.lap_s;
    ref["center"] = Json::array({s.reference.cx, s.reference.cy});
    Json offs = Json::array();
    for (const auto& o : s.reference.offsets) offs.push_back(Json::array({o(0), o(1)}));
    ref["offsets"] = offs;
  }
  j["reference"] = ref;

  Json obs;
  switch (s.obstacle.kind) {
    case ObstacleMotion::Kind::None:
      obs["kind"] = "none";
      break;
    case ObstacleMotion::Kind::Fixed:
      obs = Json{{"kind", "fixed"},
                 {"center", Json::array({s.obstacle.cx, s.obstacle.cy})},
                 {"radius", s.obstacle.radius}};
      break;
    case ObstacleMotion::Kind::Circular:
      obs = Json{{"kind", "circular"},
                 {"center", Json::array({s.obstacle.cx, s.obstacle.cy})},
                 {"radius", s.obstacle.radius},
                 {"orbit_radius", s.obstacle.orbit_radius},
                 {"period_s", s.obstacle.period_s}};
      break;
    case ObstacleMotion::Kind::Linear:
      obs = Json{{"kind", "linear"},
                 {"center", Json::array({s.obstacle.cx, s.obstacle.cy})},
                 {"radius", s.obstacle.radius},
                 {"span", Json::array({s.obstacle.span_x, s.obstacle.span_y})},
                 {"period_s", s.obstacle.period_s}};
      break;
  }
  j["obstacle"] = obs;

  Json starts = Json::array();
  for (const auto& a : s.starts)
    starts.push_back(Json{{"x0", to_array(a.x0)}, {"d", to_array(a.d)}});
  j["starts"] = starts;

  if (!s.events.empty()) {
    Json ev = Json::array();
    for (const auto& e : s.events)
      ev.push_back(Json{{"t", e.t}, {"agent", e.agent}, {"d", to_array(e.d)}});
    j["disturbance_events"] = ev;
  }

  j["seed"] = s.seed;
  return j;
}

inline ScenarioSpec scenario_from_json(const Json& j) {
  using detail::expect_keys;
  using detail::need;
  using detail::num;
  using detail::vec_of;

  expect_keys(j,
              {"name", "agents", "edges", "dt", "horizon", "custom_timing", "duration_s",
               "k_max", "l_max", "rho", "mu", "q_diag", "q_couple_diag", "r_diag", "geometry",
               "network", "noise", "controller", "reference", "obstacle", "starts",
               "disturbance_events", "seed"},
              "scenario");

  ScenarioSpec s;
  if (j.contains("name")) s.name = need(j, "name", "scenario").get<std::string>();
  s.agents = need(j, "agents", "scenario").get<int>();
  for (const auto& e : need(j, "edges", "scenario")) {
    require(e.is_array() && e.size() == 2, "scenario: each edge must be a pair");
    s.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  s.dt = num(need(j, "dt", "scenario"), "dt");
  s.horizon = need(j, "horizon", "scenario").get<int>();
  if (j.contains("custom_timing")) s.custom_timing = j["custom_timing"].get<bool>();
  s.duration_s = num(need(j, "duration_s", "scenario"), "duration_s");
  if (j.contains("k_max")) s.k_max = j["k_max"].get<int>();
  if (j.contains("l_max")) s.l_max = j["l_max"].get<int>();
  if (j.contains("rho")) s.rho = num(j["rho"], "rho");
  if (j.contains("mu")) s.mu = num(j["mu"], "mu");

  const Json& q = need(j, "q_diag", "scenario");
  require(q.is_array(), "scenario: q_diag must be an array");
  for (const auto& d : q) s.q_diag.push_back(vec_of(d, kStateDim, "q_diag entry"));
  s.q_couple_diag = vec_of(need(j, "q_couple_diag", "scenario"), kStateDim, "q_couple_diag");
  s.r_diag = vec_of(need(j, "r_diag", "scenario"), kInputDim, "r_diag");

  const Json& g = need(j, "geometry", "scenario");
  expect_keys(g, {"table_x", "table_y", "margin", "body_diameter", "d_min", "u_max"},
              "geometry");
  Vec tx = vec_of(need(g, "table_x", "geometry"), 2, "table_x");
  Vec ty = vec_of(need(g, "table_y", "geometry"), 2, "table_y");
  s.bounds.table_x0 = tx(0);
  s.bounds.table_x1 = tx(1);
  s.bounds.table_y0 = ty(0);
  s.bounds.table_y1 = ty(1);
  s.bounds.margin = num(need(g, "margin", "geometry"), "margin");
  s.bounds.body_diameter = num(need(g, "body_diameter", "geometry"), "body_diameter");
  s.bounds.d_min = num(need(g, "d_min", "geometry"), "d_min");
  s.bounds.u_max = vec_of(need(g, "u_max", "geometry"), kInputDim, "u_max");

  const Json& n = need(j, "network", "scenario");
  expect_keys(n, {"profile", "base_ms", "jitter_mean_ms", "drop_prob"}, "network");
  s.network.profile = need(n, "profile", "network").get<std::string>();
  if (s.network.profile == "custom") {
    s.network.base_ms = num(need(n, "base_ms", "network"), "base_ms");
    s.network.jitter_mean_ms = num(need(n, "jitter_mean_ms", "network"), "jitter_mean_ms");
    s.network.drop_prob = num(need(n, "drop_prob", "network"), "drop_prob");
  } else {
    require(!n.contains("base_ms") && !n.contains("jitter_mean_ms") && !n.contains("drop_prob"),
            "scenario: link numbers are only valid with the custom profile");
  }

  if (j.contains("noise")) {
    const Json& z = j["noise"];
    expect_keys(z, {"enabled", "pos_std", "yaw_std", "process_vel_std"}, "noise");
    if (z.contains("enabled")) s.noise.enabled = z["enabled"].get<bool>();
    if (z.contains("pos_std")) s.noise.pos_std = num(z["pos_std"], "pos_std");
    if (z.contains("yaw_std")) s.noise.yaw_std = num(z["yaw_std"], "yaw_std");
    if (z.contains("process_vel_std"))
      s.noise.process_vel_std = num(z["process_vel_std"], "process_vel_std");
  }

  if (j.contains("controller")) {
    const Json& c = j["controller"];
    expect_keys(c,
                {"max_wait_ms", "deadline_fraction", "shifted_warm_start", "qp_base_ms",
                 "qp_iter_ms", "overhead_ms", "forced_delay_fraction"},
                "controller");
    if (c.contains("max_wait_ms")) s.max_wait_ms = num(c["max_wait_ms"], "max_wait_ms");
    if (c.contains("deadline_fraction"))
      s.deadline_fraction = num(c["deadline_fraction"], "deadline_fraction");
    if (c.contains("shifted_warm_start"))
      s.shifted_warm_start = c["shifted_warm_start"].get<bool>();
    if (c.contains("qp_base_ms")) s.qp_base_ms = num(c["qp_base_ms"], "qp_base_ms");
    if (c.contains("qp_iter_ms")) s.qp_iter_ms = num(c["qp_iter_ms"], "qp_iter_ms");
    if (c.contains("overhead_ms")) s.overhead_ms = num(c["overhead_ms"], "overhead_ms");
    if (c.contains("forced_delay_fraction"))
      s.forced_delay_fraction = num(c["forced_delay_fraction"], "forced_delay_fraction");
  }

  const Json& r = need(j, "reference", "scenario");
  const std::string type = need(r, "type", "reference").get<std::string>();
  if (type == "setpoints") {
    expect_keys(r, {"type", "waypoints"}, "reference");
    s.reference.kind = ReferenceSpec::Kind::Setpoints;
    for (const auto& per : need(r, "waypoints", "reference")) {
      std::vector<Waypoint> list;
      for (const auto& w : per) {
        expect_keys(w, {"t", "px", "py", "yaw"}, "waypoint");
        Waypoint p;
        p.t = num(need(w, "t", "waypoint"), "t");
        p.px = num(need(w, "px", "waypoint"), "px");
        p.py = num(need(w, "py", "waypoint"), "py");
        if (w.contains("yaw")) p.yaw = num(w["yaw"], "yaw");
        list.push_back(p);
      }
      s.reference.waypoints.push_back(std::move(list));
    }
  } else if (type == "clover") {
    expect_keys(r, {"type", "amplitude", "lap_s", "center", "offsets"}, "reference");
    s.reference.kind = ReferenceSpec::Kind::Clover;
    s.reference.amplitude = num(need(r, "amplitude", "reference"), "amplitude");
    s.reference.lap_s = num(need(r, "lap_s", "reference"), "lap_s");
    Vec c = vec_of(need(r, "center", "reference"), 2, "center");
    s.reference.cx = c(0);
    s.reference.cy = c(1);
    for (const auto& o : need(r, "offsets", "reference")) {
      Vec v = vec_of(o, 2, "offset");
      s.reference.offsets.emplace_back(v(0), v(1));
    }
  } else {
    require(false, "scenario: reference type must be setpoints or clover");
  }

  const Json& o = need(j, "obstacle", "scenario");
  const std::string kind = need(o, "kind", "obstacle").get<std::string>();
  if (kind == "none") {
    expect_keys(o, {"kind"}, "obstacle");
    s.obstacle.kind = ObstacleMotion::Kind::None;
  } else {
    Vec c = vec_of(need(o, "center", "obstacle"), 2, "center");
    s.obstacle.cx = c(0);
    s.obstacle.cy = c(1);
    s.obstacle.radius = num(need(o, "radius", "obstacle"), "radius");
    if (kind == "fixed") {
      expect_keys(o, {"kind", "center", "radius"}, "obstacle");
      s.obstacle.kind = ObstacleMotion::Kind::Fixed;
    } else if (kind == "circular") {
      expect_keys(o, {"kind", "center", "radius", "orbit_radius", "period_s"}, "obstacle");
      s.obstacle.kind = ObstacleMotion::Kind::Circular;
      s.obstacle.orbit_radius = num(need(o, "orbit_radius", "obstacle"), "orbit_radius");
      s.obstacle.period_s = num(need(o, "period_s", "obstacle"), "period_s");
    } else if (kind == "linear") {
      expect_keys(o, {"kind", "center", "radius", "span", "period_s"}, "obstacle");
      s.obstacle.kind = ObstacleMotion::Kind::Linear;
      Vec span = vec_of(need(o, "span", "obstacle"), 2, "span");
      s.obstacle.span_x = span(0);
      s.obstacle.span_y = span(1);
      s.obstacle.period_s = num(need(o, "period_s", "obstacle"), "period_s");
    } else {
      require(false, "scenario: obstacle kind must be none, fixed, circular, or linear");
    }
  }

  for (const auto& a : need(j, "starts", "scenario")) {
    expect_keys(a, {"x0", "d"}, "start");
    AgentStart st;
    st.x0 = vec_of(need(a, "x0", "start"), kStateDim, "x0");
    if (a.contains("d")) st.d = vec_of(a["d"], kInputDim, "d");
    s.starts.push_back(std::move(st));
  }

  if (j.contains("disturbance_events")) {
    for (const auto& e : j["disturbance_events"]) {
      expect_keys(e, {"t", "agent", "d"}, "disturbance event");
      DisturbanceEvent ev;
      ev.t = num(need(e, "t", "event"), "t");
      ev.agent = need(e, "agent", "event").get<int>();
      ev.d = vec_of(need(e, "d", "event"), kInputDim, "d");
      s.events.push_back(std::move(ev));
    }
  }

  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  return s;
}

// Parses, validates, and returns the scenario; any problem throws ConfigError
// with a message naming the offending key.
inline ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "scenario: cannot open '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("scenario: parse failure in '" + path + "': " + e.what());
  }
  ScenarioSpec s = scenario_from_json(j);
  s.validate();
  return s;
}

inline void save_scenario(const ScenarioSpec& s, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "scenario: cannot write '" + path + "'");
  out << scenario_to_json(s).dump(2) << "\n";
}

// Per-agent state weights of the four-craft experiments: full weight on every
// agent except the last, which runs at half (heterogeneous tuning carried
// over unchanged for other fleet sizes).
inline std::vector<Vec> fleet_q_diag(int agents) {
  const Vec full = (Vec(kStateDim) << 28, 28, 18, 18, 40, 18).finished();
  const Vec half = 0.5 * full;
  std::vector<Vec> q(agents, full);
  if (agents >= 2) q.back() = half;
  return q;
}

namespace detail {

inline ScenarioSpec preset_base(const std::string& name, int agents, double dt, int horizon) {
  ScenarioSpec s;
  s.name = name;
  s.agents = agents;
  for (int i = 0; i + 1 < agents; ++i) s.edges.emplace_back(i, i + 1);
  s.dt = dt;
  s.horizon = horizon;
  s.q_diag = fleet_q_diag(agents);
  s.q_couple_diag = (Vec(kStateDim) << 14, 14, 9, 9, 20, 9).finished();
  s.r_diag = (Vec(kInputDim) << 0.1, 0.1, 0.1).finished();
  s.network.profile = "offboard";
  return s;
}

inline AgentStart rest_at(double px, double py) {
  AgentStart a;
  a.x0(0) = px;
  a.x0(1) = py;
  return a;
}

inline std::vector<Waypoint> go_to(double px, double py) {
  return {Waypoint{0.0, px, py, 0.0}};
}

inline std::vector<Waypoint> hold_then_go(double hx, double hy, double t1, double px,
                                          double py) {
  return {Waypoint{0.0, hx, hy, 0.0}, Waypoint{t1, px, py, 0.0}};
}

}  // namespace detail

// Line formation regrouping onto the corners of a rectangle; the staggered
// start heights keep the crossings away from exact symmetry.
inline ScenarioSpec preset_rectangle_transition() {
  using namespace detail;
  ScenarioSpec s = preset_base("rectangle-transition", 4, 0.05, 20);
  s.duration_s = 10.0;
  s.starts = {rest_at(0.20, 0.28), rest_at(0.42, 0.31), rest_at(0.63, 0.29),
              rest_at(0.85, 0.32)};
  s.reference.waypoints = {go_to(0.20, 0.15), go_to(0.20, 0.45), go_to(0.80, 0.45),
                           go_to(0.80, 0.15)};
  return s;
}

// Two vertical head-on exchanges after a one-second hold; the slight x offsets
// turn the crossings into skew passes the avoidance rows can resolve.
inline ScenarioSpec preset_neighbor_swap() {
  using namespace detail;
  ScenarioSpec s = preset_base("neighbor-swap", 4, 0.05, 20);
  s.duration_s = 6.0;
  s.noise.enabled = true;
  s.starts = {rest_at(0.22, 0.15), rest_at(0.28, 0.45), rest_at(0.72, 0.45),
              rest_at(0.78, 0.15)};
  s.reference.waypoints = {hold_then_go(0.22, 0.15, 1.0, 0.28, 0.45),
                           hold_then_go(0.28, 0.45, 1.0, 0.22, 0.15),
                           hold_then_go(0.72, 0.45, 1.0, 0.78, 0.15),
                           hold_then_go(0.78, 0.15, 1.0, 0.72, 0.45)};
  return s;
}

// Left-to-right crossing of a long table with a parked disk in the middle
// lane; the two center agents must bend around it.
inline ScenarioSpec preset_left_right_static_obstacle() {
  using namespace detail;
  ScenarioSpec s = preset_base("left-right-static-obstacle", 4, 0.15, 7);
  s.duration_s = 9.0;
  s.noise.enabled = true;
  s.bounds.table_x1 = 2.0;
  s.bounds.table_y1 = 1.0;
  const double lane[4] = {0.18, 0.41, 0.63, 0.84};
  s.starts.clear();
  s.reference.waypoints.clear();
  for (int i = 0; i < 4; ++i) {
    s.starts.push_back(rest_at(0.3, lane[i]));
    s.reference.waypoints.push_back(go_to(1.7, lane[i]));
  }
  s.obstacle.kind = ObstacleMotion::Kind::Fixed;
  s.obstacle.cx = 1.0;
  s.obstacle.cy = 0.5;
  s.obstacle.radius = 0.075;
  return s;
}

// Same crossing against a disk sweeping a circle through the lanes; runs on
// the fast design so the avoidance rows are relinearized often enough to
// track the moving constraint.
inline ScenarioSpec preset_left_right_circular_obstacle() {
  using namespace detail;
  ScenarioSpec s = preset_base("left-right-circular-obstacle", 4, 0.05, 20);
  s.duration_s = 6.0;
  s.noise.enabled = true;
  s.bounds.table_x1 = 2.0;
  s.bounds.table_y1 = 1.0;
  const double lane[4] = {0.18, 0.41, 0.63, 0.84};
  s.starts.clear();
  s.reference.waypoints.clear();
  for (int i = 0; i < 4; ++i) {
    s.starts.push_back(rest_at(0.3, lane[i]));
    s.reference.waypoints.push_back(go_to(1.7, lane[i]));
  }
  s.obstacle.kind = ObstacleMotion::Kind::Circular;
  s.obstacle.cx = 1.0;
  s.obstacle.cy = 0.5;
  s.obstacle.radius = 0.075;
  s.obstacle.orbit_radius = 0.18;
  s.obstacle.period_s = 6.0;
  return s;
}

// Offset column tracking the three-petal curve while a disk glides diagonally
// through the formation; runs with the tracking penalty and feedforward.
inline ScenarioSpec preset_clover_tracking() {
  using namespace detail;
  ScenarioSpec s = preset_base("clover-tracking-traversing-obstacle", 4, 0.15, 7);
  s.duration_s = 15.0;
  s.noise.enabled = true;
  s.rho = 0.1;
  s.bounds.table_x1 = 2.0;
  s.bounds.table_y1 = 1.0;
  s.reference.kind = ReferenceSpec::Kind::Clover;
  s.reference.amplitude = 0.35;
  s.reference.lap_s = 15.0;
  s.reference.cx = 0.6;
  s.reference.cy = 0.5;
  s.reference.offsets = {{0.0, 0.0}, {0.28, 0.0}, {0.56, 0.0}, {0.84, 0.0}};
  s.starts.clear();
  for (const auto& o : s.reference.offsets) s.starts.push_back(rest_at(0.6 + o(0), 0.5));
  s.obstacle.kind = ObstacleMotion::Kind::Linear;
  s.obstacle.cx = 0.35;
  s.obstacle.cy = 0.25;
  s.obstacle.radius = 0.075;
  s.obstacle.span_x = 1.25;
  s.obstacle.span_y = 0.45;
  s.obstacle.period_s = 15.0;
  return s;
}

inline std::vector<std::string> preset_names() {
  return {"rectangle-transition", "neighbor-swap", "left-right-static-obstacle",
          "left-right-circular-obstacle", "clover-tracking-traversing-obstacle"};
}

inline ScenarioSpec make_preset(const std::string& name) {
  if (name == "rectangle-transition") return preset_rectangle_transition();
  if (name == "neighbor-swap") return preset_neighbor_swap();
  if (name == "left-right-static-obstacle") return preset_left_right_static_obstacle();
  if (name == "left-right-circular-obstacle") return preset_left_right_circular_obstacle();
  if (name == "clover-tracking-traversing-obstacle") return preset_clover_tracking();
  throw ConfigError("scenario: unknown preset '" + name + "'");
}

// Checks every preset against the values the experiments are defined by,
// using independent literals rather than the structs' own defaults, and
// verifies the JSON round trip is lossless. Returns human-readable problems;
// empty means the catalog is intact.
inline std::vector<std::string> config_selftest() {
  std::vector<std::string> problems;
  auto fail = [&](const std::string& name, const std::string& what) {
    problems.push_back(name + ": " + what);
  };

  bool saw_fast = false, saw_slow = false, saw_setpoint_rho = false, saw_tracking_rho = false;
  for (const std::string& name : preset_names()) {
    ScenarioSpec s = make_preset(name);
    try {
      s.validate();
    } catch (const std::exception& e) {
      fail(name, std::string("does not validate: ") + e.what());
      continue;
    }

    if (s.bounds.u_max.size() != 3 || s.bounds.u_max(0) != 5.0 || s.bounds.u_max(1) != 5.0 ||
        s.bounds.u_max(2) != 15.0)
      fail(name, "input bounds are not (5, 5, 15)");
    if (s.bounds.d_min != 0.2) fail(name, "separation distance is not 200 mm");
    if (s.bounds.margin != 0.03) fail(name, "wall margin is not 30 mm");
    if (s.bounds.body_diameter != 0.15) fail(name, "body diameter is not 150 mm");

    const bool fast = s.dt == 0.05 && s.horizon == 20;
    const bool slow = s.dt == 0.15 && s.horizon == 7;
    if (!fast && !slow) fail(name, "not one of the two catalog (dt, horizon) designs");
    saw_fast = saw_fast || fast;
    saw_slow = saw_slow || slow;

    if (s.rho != 4.0 && s.rho != 0.1) fail(name, "consensus penalty is neither 4 nor 0.1");
    saw_setpoint_rho = saw_setpoint_rho || s.rho == 4.0;
    saw_tracking_rho = saw_tracking_rho || s.rho == 0.1;
    if (s.mu != 1e5) fail(name, "slack penalty is not 1e5");

    const Vec full = (Vec(kStateDim) << 28, 28, 18, 18, 40, 18).finished();
    for (int i = 0; i < s.agents; ++i) {
      const Vec want = i + 1 == s.agents ? (0.5 * full).eval() : full;
      if (s.q_diag[i] != want) fail(name, "state weights deviate from the catalog tuning");
    }
    const Vec couple = (Vec(kStateDim) << 14, 14, 9, 9, 20, 9).finished();
    if (s.q_couple_diag != couple) fail(name, "coupling weights deviate from the catalog");
    const Vec r = (Vec(kInputDim) << 0.1, 0.1, 0.1).finished();
    if (s.r_diag != r) fail(name, "input weights are not 0.1");

    const Json j = scenario_to_json(s);
    ScenarioSpec back = scenario_from_json(j);
    if (scenario_to_json(back) != j) fail(name, "JSON round trip is not lossless");
  }
  if (!saw_fast) problems.push_back("catalog: no preset uses the 50 ms / N=20 design");
  if (!saw_slow) problems.push_back("catalog: no preset uses the 150 ms / N=7 design");
  if (!saw_setpoint_rho) problems.push_back("catalog: no preset uses the setpoint penalty 4");
  if (!saw_tracking_rho) problems.push_back("catalog: no preset uses the tracking penalty 0.1");
  return problems;
}

}  // namespace dmpc
