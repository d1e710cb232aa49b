#pragma once

#include <random>

#include "dmpc/model.hpp"

namespace dmpc {

inline Vec plant_step(const DiscreteModel& m, const Vec& x, const Vec& u, const Vec& d) {
  require(x.size() == kStateDim && u.size() == kInputDim && d.size() == kInputDim,
          "plant: dimension mismatch");
  require(u.allFinite(), "plant: non-finite input");
  return m.A * x + m.B * (u + d);
}

// Measurement noise scales; zero disables a term. Positions and yaw come from
// an external tracking system with millimeter-level accuracy.
struct SensorNoise {
  double pos_std = 1e-3;   // meters
  double yaw_std = 2e-3;   // radians

  static SensorNoise off() { return {0.0, 0.0}; }
};

// Ground-truth simulation of one vehicle: exact disturbed double-integrator
// propagation plus optional seeded process and measurement noise.
class Plant {
 public:
  Plant(const DiscreteModel& m, Vec x0, Vec d, std::uint64_t seed,
        double process_vel_std = 0.0)
      : model_(m),
        x_(std::move(x0)),
        d_(std::move(d)),
        process_vel_std_(process_vel_std),
        rng_(stream_seed(seed, 0x9a7)) {
    require(x_.size() == kStateDim, "plant: state must have size 6");
    require(d_.size() == kInputDim, "plant: disturbance must have size 3");
    require(process_vel_std >= 0.0, "plant: noise std must be nonnegative");
  }

  void step(const Vec& u) {
    x_ = plant_step(model_, x_, u, d_);
    if (process_vel_std_ > 0.0) {
      std::normal_distribution<double> nd(0.0, process_vel_std_);
      for (int a = 0; a < 3; ++a) x_(3 + a) += nd(rng_);
    }
  }

  Vec measure(const SensorNoise& noise) {
    Vec y(kOutputDim);
    y << x_(0), x_(1), x_(2);
    if (noise.pos_std > 0.0) {
      std::normal_distribution<double> nd(0.0, noise.pos_std);
      y(0) += nd(rng_);
      y(1) += nd(rng_);
    }
    if (noise.yaw_std > 0.0) {
      std::normal_distribution<double> nd(0.0, noise.yaw_std);
      y(2) += nd(rng_);
    }
    return y;
  }

  const Vec& state() const { return x_; }
  const Vec& disturbance() const { return d_; }
  void set_disturbance(Vec d) {
    require(d.size() == kInputDim, "plant: disturbance must have size 3");
    d_ = std::move(d);
  }

 private:
  DiscreteModel model_;
  Vec x_, d_;
  double process_vel_std_ = 0.0;
  std::mt19937_64 rng_;
};

}  // namespace dmpc
