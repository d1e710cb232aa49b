#pragma once

#include <cmath>
#include <numbers>

#include "dmpc/types.hpp"

namespace dmpc {

// Moving disk the agents must avoid. Motion kinds:
//   none     - no obstacle in the scene
//   fixed    - static disk at (cx, cy)
//   circular - disk orbiting (cx, cy) with given radius and period
//   linear   - disk gliding from (cx, cy) to (cx, cy) + span, then wrapping
struct ObstacleMotion {
  enum class Kind { None, Fixed, Circular, Linear };

  Kind kind = Kind::None;
  double radius = 0.075;  // disk radius [m]
  double cx = 0.0, cy = 0.0;
  double orbit_radius = 0.0;
  double period_s = 1.0;
  double span_x = 0.0, span_y = 0.0;

  bool active() const { return kind != Kind::None; }

  Eigen::Vector2d position(double t) const {
    switch (kind) {
      case Kind::Fixed:
        return {cx, cy};
      case Kind::Circular: {
        const double a = 2.0 * std::numbers::pi * t / period_s;
        return {cx + orbit_radius * std::cos(a), cy + orbit_radius * std::sin(a)};
      }
      case Kind::Linear: {
        double frac = t / period_s - std::floor(t / period_s);
        return {cx + frac * span_x, cy + frac * span_y};
      }
      case Kind::None:
        break;
    }
    check(false, "obstacle_position: no obstacle configured");
    return {0.0, 0.0};
  }
};

inline Eigen::Vector2d obstacle_position(const ObstacleMotion& o, double t) {
  return o.position(t);
}

}  // namespace dmpc
