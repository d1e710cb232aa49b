#pragma once

#include <map>
#include <utility>
#include <vector>

#include "dmpc/dare.hpp"
#include "dmpc/graph.hpp"
#include "dmpc/model.hpp"
#include "dmpc/types.hpp"

namespace dmpc {

struct WeightConfig {
  std::vector<Vec> q_diag;  // per-agent Q_ii diagonal, size 6
  Vec q_couple_diag;        // coupling magnitude per edge, Q_ij = -diag(...)
  Vec r_diag;               // input weight diagonal, size 3
  double mu = 1e5;          // quadratic slack penalty
  double rho = 4.0;         // consensus penalty
};

// Cost weights for the cooperative OCP. Terminal blocks come from per-pair
// Riccati solutions; the off-diagonal terminal blocks are scaled by the
// largest uniform factor theta <= 1 for which every agent keeps a positive
// semidefinite terminal remainder P_ii - theta * sum_j M_ij. That bound makes
// the assembled terminal weight positive definite (sum of PSD edge forms plus
// PSD remainders) and is what permits splitting the cost over agents without
// losing convexity; the unscaled per-pair assembly is indefinite for coupling
// weights as strong as the defaults here.
struct WeightSet {
  int agents = 0;
  std::vector<Mat> Qii;                          // 6x6 per agent
  std::map<std::pair<int, int>, Mat> Wedge;      // -Q_ij per edge (i<j)
  std::vector<Mat> R;                            // 3x3 per agent
  std::vector<Mat> Pii;                          // Riccati of (Q_ii, R)
  std::map<std::pair<int, int>, Mat> Medge;      // Riccati of (W_ij, R)
  double theta = 1.0;                            // terminal coupling scale
  std::vector<Mat> Qself;                        // Q_ii - sum_j W_ij, PSD
  std::vector<Mat> Pself;                        // P_ii - theta sum_j M_ij, PSD
  double mu = 1e5;
  double rho = 4.0;

  Mat Q_central;  // 6S x 6S, blocks [Q_ij]
  Mat P_central;  // 6S x 6S, terminal blocks

  const Mat& W_of(int i, int j) const { return Wedge.at(edge_key(i, j)); }
  const Mat& M_of(int i, int j) const { return Medge.at(edge_key(i, j)); }
  Mat Q_offdiag(int i, int j) const { return -W_of(i, j); }
  Mat P_offdiag(int i, int j) const { return -theta * M_of(i, j); }

  static std::pair<int, int> edge_key(int i, int j) {
    return i < j ? std::make_pair(i, j) : std::make_pair(j, i);
  }
};

inline WeightSet build_weights(const CouplingGraph& graph, const DiscreteModel& model,
                               const WeightConfig& cfg) {
  const int S = graph.size();
  require(static_cast<int>(cfg.q_diag.size()) == S, "build_weights: one q_diag per agent");
  require(cfg.r_diag.size() == kInputDim, "build_weights: r_diag must have size 3");
  require(cfg.mu > 0.0, "build_weights: mu must be positive");
  require(cfg.rho > 0.0, "build_weights: rho must be positive");

  WeightSet w;
  w.agents = S;
  w.mu = cfg.mu;
  w.rho = cfg.rho;

  const Mat Rm = Vec(cfg.r_diag).asDiagonal();
  check(Rm.diagonal().minCoeff() > 0.0, "build_weights: R must be positive definite");

  for (int i = 0; i < S; ++i) {
    require(cfg.q_diag[i].size() == kStateDim, "build_weights: q_diag entries must have size 6");
    check(cfg.q_diag[i].minCoeff() > 0.0, "build_weights: Q_ii must be positive definite");
    w.Qii.push_back(Mat(Vec(cfg.q_diag[i]).asDiagonal()));
    w.R.push_back(Rm);
    w.Pii.push_back(solve_dare(model.A, model.B, w.Qii.back(), Rm));
  }

  bool coupled = false;
  if (!graph.edges().empty()) {
    require(cfg.q_couple_diag.size() == kStateDim,
            "build_weights: q_couple_diag must have size 6");
    check(cfg.q_couple_diag.minCoeff() >= 0.0,
          "build_weights: coupling magnitudes must be nonnegative");
    coupled = cfg.q_couple_diag.maxCoeff() > 0.0;
    Mat We = Vec(cfg.q_couple_diag).asDiagonal();
    Mat Me = coupled ? solve_dare(model.A, model.B, We, Rm) : Mat::Zero(kStateDim, kStateDim);
    for (auto e : graph.edges()) {
      w.Wedge[e] = We;
      w.Medge[e] = Me;
    }
  }

  // Terminal coupling scale.
  w.theta = 1.0;
  if (coupled) {
    for (int i = 0; i < S; ++i) {
      if (graph.degree(i) == 0) continue;
      Mat Msum = Mat::Zero(kStateDim, kStateDim);
      for (int j : graph.neighbors(i)) Msum += w.M_of(i, j);
      Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(w.Pii[i], Msum);
      check(ges.info() == Eigen::Success, "build_weights: terminal scale eigensolve failed");
      w.theta = std::min(w.theta, ges.eigenvalues().minCoeff());
    }
    check(w.theta > 0.0, "build_weights: terminal coupling scale collapsed to zero");
  }

  // Per-agent split remainders.
  for (int i = 0; i < S; ++i) {
    Mat qs = w.Qii[i];
    Mat ps = w.Pii[i];
    for (int j : graph.neighbors(i)) {
      qs -= w.W_of(i, j);
      ps -= w.theta * w.M_of(i, j);
    }
    Eigen::SelfAdjointEigenSolver<Mat> eq(qs), ep(ps);
    check(eq.eigenvalues().minCoeff() >= -1e-9 * std::max(1.0, qs.cwiseAbs().maxCoeff()),
          "build_weights: weights do not admit a convex per-agent splitting");
    check(ep.eigenvalues().minCoeff() >= -1e-9 * std::max(1.0, ps.cwiseAbs().maxCoeff()),
          "build_weights: terminal splitting not positive semidefinite");
    w.Qself.push_back(0.5 * (qs + qs.transpose()));
    w.Pself.push_back(0.5 * (ps + ps.transpose()));
  }

  // Assemble and verify centralized weights.
  const int n = S * kStateDim;
  w.Q_central = Mat::Zero(n, n);
  w.P_central = Mat::Zero(n, n);
  for (int i = 0; i < S; ++i) {
    w.Q_central.block(i * kStateDim, i * kStateDim, kStateDim, kStateDim) = w.Qii[i];
    w.P_central.block(i * kStateDim, i * kStateDim, kStateDim, kStateDim) = w.Pii[i];
    for (int j : graph.neighbors(i)) {
      w.Q_central.block(i * kStateDim, j * kStateDim, kStateDim, kStateDim) = -w.W_of(i, j);
      w.P_central.block(i * kStateDim, j * kStateDim, kStateDim, kStateDim) =
          -w.theta * w.M_of(i, j);
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat> esq(w.Q_central), esp(w.P_central);
  check(esq.eigenvalues().minCoeff() > 0.0,
        "build_weights: assembled Q not positive definite");
  check(esp.eigenvalues().minCoeff() > 0.0,
        "build_weights: assembled P not positive definite");
  return w;
}

}  // namespace dmpc
