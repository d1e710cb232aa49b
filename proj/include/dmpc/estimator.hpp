#pragma once

#include "dmpc/model.hpp"

namespace dmpc {

// Kalman filter tuning for the 9-state (state + constant disturbance) model.
// The disturbance channel's process noise sets how fast the offset estimate
// adapts; the defaults settle on a constant bias within a few seconds at
// either sampling rate.
struct KalmanConfig {
  Vec process_diag = (Vec(kExtDim) << 1e-10, 1e-10, 1e-10, 1e-8, 1e-8, 1e-8, 2e-4, 2e-4, 2e-4)
                         .finished();
  Vec meas_diag = (Vec(kOutputDim) << 1e-6, 1e-6, 4e-6).finished();
  Vec init_diag = (Vec(kExtDim) << 1e-6, 1e-6, 1e-6, 1e-2, 1e-2, 1e-2, 0.25, 0.25, 0.25)
                      .finished();
};

// Linear filter on the disturbance-extended model; the constant-offset channel
// is what makes the controller's tracking offset-free.
class DisturbanceEstimator {
 public:
  DisturbanceEstimator(const ExtendedModel& em, const ExtendedState& init,
                       const KalmanConfig& cfg = {})
      : em_(em), est_(init) {
    require(cfg.process_diag.size() == kExtDim && cfg.meas_diag.size() == kOutputDim &&
                cfg.init_diag.size() == kExtDim,
            "estimator: config dimension mismatch");
    require(cfg.meas_diag.minCoeff() > 0.0, "estimator: measurement noise must be positive");
    require(cfg.process_diag.minCoeff() >= 0.0 && cfg.init_diag.minCoeff() > 0.0,
            "estimator: covariances must be nonnegative");
    Q_ = cfg.process_diag.asDiagonal();
    R_ = cfg.meas_diag.asDiagonal();
    P_ = cfg.init_diag.asDiagonal();
  }

  void predict(const Vec& u) {
    require(u.size() == kInputDim, "estimator: input must have size 3");
    est_.xi = em_.F * est_.xi + em_.G * u;
    P_ = em_.F * P_ * em_.F.transpose() + Q_;
  }

  // Measurement update; returns the innovation y - C xi_pred.
  Vec update(const Vec& y) {
    require(y.size() == kOutputDim, "estimator: measurement must have size 3");
    require(y.allFinite(), "estimator: non-finite measurement");
    const Vec innov = y - em_.C * est_.xi;
    const Mat S = em_.C * P_ * em_.C.transpose() + R_;
    Eigen::LLT<Mat> llt(S);
    check(llt.info() == Eigen::Success, "estimator: innovation covariance not positive definite");
    const Mat K = llt.solve(em_.C * P_).transpose();
    est_.xi += K * innov;
    const Mat J = Mat::Identity(kExtDim, kExtDim) - K * em_.C;
    P_ = J * P_ * J.transpose() + K * R_ * K.transpose();
    P_ = 0.5 * (P_ + P_.transpose());
    check(Eigen::LLT<Mat>(P_).info() == Eigen::Success,
          "estimator: covariance lost positive definiteness");
    return innov;
  }

  Vec step(const Vec& u, const Vec& y) {
    predict(u);
    return update(y);
  }

  const ExtendedState& estimate() const { return est_; }
  const Mat& covariance() const { return P_; }

 private:
  ExtendedModel em_;
  ExtendedState est_;
  Mat P_, Q_, R_;
};

}  // namespace dmpc
