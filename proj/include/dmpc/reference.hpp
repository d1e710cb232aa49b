#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dmpc/types.hpp"

namespace dmpc {

struct Waypoint {
  double t = 0.0;
  double px = 0.0;
  double py = 0.0;
  double yaw = 0.0;
};

struct ReferencePoint {
  Vec x_d = Vec::Zero(kStateDim);
  Vec u_d = Vec::Zero(kInputDim);
};

// Three-petal rose r = amp * sin(3*theta), one lap per lap_s seconds.
// Returns position/velocity/feedforward acceleration; yaw reference is zero
// (the craft translates without turning).
inline ReferencePoint clover_reference(double t, double amp, double lap_s,
                                       double cx, double cy) {
  require(amp > 0.0 && lap_s > 0.0, "clover_reference: amp and lap_s must be positive");
  const double w = 2.0 * std::numbers::pi / lap_s;  // d theta / dt
  const double th = w * t;
  const double r = amp * std::sin(3.0 * th);
  const double r1 = 3.0 * amp * std::cos(3.0 * th);   // dr/dtheta
  const double r2 = -9.0 * amp * std::sin(3.0 * th);  // d2r/dtheta2
  const double c = std::cos(th), s = std::sin(th);

  ReferencePoint p;
  p.x_d(0) = cx + r * c;
  p.x_d(1) = cy + r * s;
  p.x_d(3) = w * (r1 * c - r * s);
  p.x_d(4) = w * (r1 * s + r * c);
  p.u_d(0) = w * w * ((r2 - r) * c - 2.0 * r1 * s);
  p.u_d(1) = w * w * ((r2 - r) * s + 2.0 * r1 * c);
  return p;
}

// Per-agent reference: either a piecewise-constant setpoint sequence (last
// waypoint holds, velocities zero) or the clover track shifted by a constant
// formation offset.
class ReferenceSchedule {
 public:
  static ReferenceSchedule setpoints(std::vector<std::vector<Waypoint>> per_agent) {
    ReferenceSchedule r;
    r.mode_ = Mode::Setpoints;
    r.waypoints_ = std::move(per_agent);
    for (auto& w : r.waypoints_) {
      require(!w.empty(), "reference: each agent needs at least one waypoint");
      for (std::size_t k = 1; k < w.size(); ++k)
        require(w[k].t > w[k - 1].t, "reference: waypoint times must increase");
      require(w.front().t <= 0.0, "reference: first waypoint must start at or before t=0");
    }
    return r;
  }

  static ReferenceSchedule clover(int agents, double amp, double lap_s, double cx,
                                  double cy, std::vector<Eigen::Vector2d> offsets) {
    ReferenceSchedule r;
    r.mode_ = Mode::Clover;
    require(static_cast<int>(offsets.size()) == agents,
            "reference: one clover offset per agent");
    r.amp_ = amp;
    r.lap_s_ = lap_s;
    r.cx_ = cx;
    r.cy_ = cy;
    r.offsets_ = std::move(offsets);
    r.agents_ = agents;
    return r;
  }

  int agents() const {
    return mode_ == Mode::Clover ? agents_ : static_cast<int>(waypoints_.size());
  }

  ReferencePoint sample(int agent, double t) const {
    if (mode_ == Mode::Clover) {
      ReferencePoint p = clover_reference(t, amp_, lap_s_, cx_, cy_);
      p.x_d(0) += offsets_.at(agent)(0);
      p.x_d(1) += offsets_.at(agent)(1);
      return p;
    }
    const auto& w = waypoints_.at(agent);
    std::size_t k = 0;
    while (k + 1 < w.size() && w[k + 1].t <= t) ++k;
    ReferencePoint p;
    p.x_d(0) = w[k].px;
    p.x_d(1) = w[k].py;
    p.x_d(2) = w[k].yaw;
    return p;
  }

 private:
  enum class Mode { Setpoints, Clover };
  Mode mode_ = Mode::Setpoints;
  std::vector<std::vector<Waypoint>> waypoints_;
  int agents_ = 0;
  double amp_ = 0.0, lap_s_ = 0.0, cx_ = 0.0, cy_ = 0.0;
  std::vector<Eigen::Vector2d> offsets_;
};

}  // namespace dmpc
