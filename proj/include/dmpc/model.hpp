#pragma once

#include "dmpc/types.hpp"

namespace dmpc {

// Planar hovercraft as a triple double integrator: positions/heading driven by
// commanded accelerations. Zero-order hold on the input gives the exact
// discrete pair
//   A = [I, dt*I; 0, I],  B = [dt^2/2*I; dt*I].
struct DiscreteModel {
  Mat A;  // 6x6
  Mat B;  // 6x3
  double dt = 0.0;
};

inline DiscreteModel zoh_discretize(double dt) {
  require(dt > 0.0, "zoh_discretize: dt must be positive");
  DiscreteModel m;
  m.dt = dt;
  m.A = Mat::Identity(kStateDim, kStateDim);
  m.B = Mat::Zero(kStateDim, kInputDim);
  for (int a = 0; a < 3; ++a) {
    m.A(a, 3 + a) = dt;
    m.B(a, a) = 0.5 * dt * dt;
    m.B(3 + a, a) = dt;
  }
  return m;
}

// Stacked (state, constant input-side disturbance) used by the estimator:
//   xi+ = F xi + G u,  y = C xi,  with x+ = A x + B (u + d), d+ = d.
struct ExtendedModel {
  Mat F;  // 9x9
  Mat G;  // 9x3
  Mat C;  // 3x9
};

inline ExtendedModel extend_with_disturbance(const DiscreteModel& m) {
  ExtendedModel e;
  e.F = Mat::Identity(kExtDim, kExtDim);
  e.F.topLeftCorner(kStateDim, kStateDim) = m.A;
  e.F.topRightCorner(kStateDim, kInputDim) = m.B;
  e.G = Mat::Zero(kExtDim, kInputDim);
  e.G.topRows(kStateDim) = m.B;
  e.C = Mat::Zero(kOutputDim, kExtDim);
  e.C(0, 0) = e.C(1, 1) = e.C(2, 2) = 1.0;
  return e;
}

// Estimator state: x = head(6), d = tail(3).
struct ExtendedState {
  Vec xi = Vec::Zero(kExtDim);

  Eigen::VectorBlock<Vec> x() { return xi.head(kStateDim); }
  Eigen::VectorBlock<const Vec> x() const { return xi.head(kStateDim); }
  Eigen::VectorBlock<Vec> d() { return xi.tail(kInputDim); }
  Eigen::VectorBlock<const Vec> d() const { return xi.tail(kInputDim); }
};

}  // namespace dmpc
