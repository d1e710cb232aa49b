#pragma once

#include <Eigen/Dense>

#include "dmpc/types.hpp"

namespace dmpc {

// Discrete algebraic Riccati equation
//   P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q
// solved with the structured doubling algorithm (quadratic convergence,
// no eigen decomposition of the symplectic pencil needed).
inline Mat solve_dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                      int max_iter = 120, double tol = 1e-14) {
  const int n = static_cast<int>(A.rows());
  require(A.cols() == n && B.rows() == n, "solve_dare: dimension mismatch");
  require(Q.rows() == n && Q.cols() == n, "solve_dare: Q must be n x n");
  require(R.rows() == B.cols() && R.cols() == B.cols(), "solve_dare: R must be m x m");
  require(Q.isApprox(Q.transpose(), 1e-12), "solve_dare: Q must be symmetric");
  require(R.isApprox(R.transpose(), 1e-12), "solve_dare: R must be symmetric");

  Eigen::LLT<Mat> rchol(R);
  check(rchol.info() == Eigen::Success, "solve_dare: R must be positive definite");

  Mat Ak = A;
  Mat Gk = B * rchol.solve(B.transpose());
  Mat Pk = Q;

  for (int it = 0; it < max_iter; ++it) {
    Mat W = Mat::Identity(n, n) + Gk * Pk;
    Eigen::PartialPivLU<Mat> lu(W);
    Mat WiA = lu.solve(Ak);
    Mat WiG = lu.solve(Gk);
    Mat An = Ak * WiA;
    Mat Gn = Gk + Ak * WiG * Ak.transpose();
    Mat Pn = Pk + WiA.transpose() * Pk * Ak;
    Pn = 0.5 * (Pn + Pn.transpose());
    Gn = 0.5 * (Gn + Gn.transpose());
    const double dp = (Pn - Pk).cwiseAbs().maxCoeff();
    Ak = std::move(An);
    Gk = std::move(Gn);
    Pk = std::move(Pn);
    if (dp <= tol * std::max(1.0, Pk.cwiseAbs().maxCoeff())) {
      Mat BtPB = B.transpose() * Pk * B;
      Mat res = A.transpose() * Pk * A - Pk -
                A.transpose() * Pk * B * (R + BtPB).ldlt().solve(B.transpose() * Pk * A) + Q;
      check(res.cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, Pk.cwiseAbs().maxCoeff()),
            "solve_dare: residual check failed");
      return Pk;
    }
  }
  check(false, "solve_dare: no convergence");
  return Pk;
}

struct LqrResult {
  Mat K;  // u = -K (x - x_d)
  Mat P;
};

inline LqrResult lqr_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
  LqrResult r;
  r.P = solve_dare(A, B, Q, R);
  r.K = (R + B.transpose() * r.P * B).ldlt().solve(B.transpose() * r.P * A);
  return r;
}

}  // namespace dmpc
