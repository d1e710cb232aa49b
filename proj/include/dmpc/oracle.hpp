#pragma once

#include <limits>
#include <vector>

#include "dmpc/dare.hpp"
#include "dmpc/layout.hpp"
#include "dmpc/model.hpp"
#include "dmpc/ocp.hpp"
#include "dmpc/qp.hpp"

namespace dmpc {

// Centralized references: the same per-agent subproblems coordinated by a
// stacked solve instead of the consensus loop. Model and cost definitions are
// shared with the decentralized path on purpose, so comparisons isolate the
// coordination layer.

inline StackedSolution centralized_qp(const std::vector<QpProblem>& probs, const CouplingMap& map,
                                      const QpSettings& settings = {}) {
  return qp_solve_stacked(probs, map, settings);
}

struct SqpResult {
  std::vector<Vec> z;  // per-agent primal, copies consistent across agents
  int iterations = 0;
  double step_norm = std::numeric_limits<double>::infinity();
  bool converged = false;
};

// Gauss-Newton iteration on the coupled fleet problem: relinearize every
// avoidance row at the current iterate, solve the stacked convex subproblem
// exactly, repeat until the full-step norm drops below tol. The soft
// constraints keep every subproblem feasible, so the only failure mode is the
// iteration cap; the best iterate is returned either way.
inline SqpResult centralized_sqp(std::vector<AgentOcp>& ocps, const CouplingMap& map,
                                 std::vector<Vec> z0, double tol = 1e-8, int max_iter = 30,
                                 const QpSettings& settings = {}) {
  const int S = static_cast<int>(ocps.size());
  require(S >= 1 && static_cast<int>(z0.size()) == S, "centralized_sqp: iterate/agent mismatch");
  require(tol > 0.0 && max_iter >= 1, "centralized_sqp: bad tolerance or cap");

  SqpResult r;
  r.z = std::move(z0);
  std::vector<QpProblem> probs(S);
  for (int it = 0; it < max_iter; ++it) {
    for (int i = 0; i < S; ++i) {
      ocps[i].relinearize(r.z[i]);
      probs[i] = ocps[i].problem();
    }
    auto sol = qp_solve_stacked(probs, map, settings);
    check(sol.raw.ok() || sol.raw.status == QpStatus::MaxIter,
          "centralized_sqp: stacked solve failed");
    r.step_norm = 0.0;
    for (int i = 0; i < S; ++i)
      r.step_norm = std::max(r.step_norm, (sol.per_agent[i] - r.z[i]).lpNorm<Eigen::Infinity>());
    for (int i = 0; i < S; ++i) r.z[i] = sol.per_agent[i];
    r.iterations = it + 1;
    if (r.step_norm <= tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

struct CentralizedSettings {
  double tol = 1e-8;
  int max_sqp = 30;
  QpSettings qp;
};

// Closed-loop centralized MPC over the same subproblem definitions, with the
// same one-interval actuation delay: the committed input is stage u[1] and the
// in-flight input is pinned at stage u[0].
class CentralizedMpc {
 public:
  CentralizedMpc(const CouplingGraph& graph, int horizon, const DiscreteModel& model,
                 const WeightSet& weights, const BoundsConfig& bounds,
                 const std::vector<bool>& obstacle, double obstacle_radius,
                 const CentralizedSettings& s = {})
      : map_(build_coupling_map(graph, horizon)), set_(s), N_(horizon), u_max_(bounds.u_max) {
    require(static_cast<int>(obstacle.size()) == graph.size(),
            "centralized: one obstacle flag per agent");
    for (int i = 0; i < graph.size(); ++i) {
      ocps_.emplace_back(graph, i, horizon, model, weights, bounds, obstacle[i], obstacle_radius);
      if (obstacle[i]) map_.layouts[i] = ocps_.back().layout();
      z_.push_back(Vec::Zero(ocps_.back().layout().dim()));
      committed_.push_back(Vec::Zero(kInputDim));
    }
  }

  void initialize(const std::vector<Vec>& x0) {
    require(x0.size() == ocps_.size(), "centralized: one initial state per agent");
    for (std::size_t i = 0; i < ocps_.size(); ++i) {
      const auto& l = ocps_[i].layout();
      for (int t = 0; t <= N_; ++t) z_[i].segment(l.x(t), kStateDim) = x0[i];
      for (int j : l.neighbors())
        for (int t = 0; t <= N_; ++t) z_[i].segment(l.w(j, t), kStateDim) = x0[j];
    }
  }

  std::vector<Vec> step(const std::vector<ExtendedState>& estimates,
                        const std::vector<StepData>& refs) {
    require(estimates.size() == ocps_.size() && refs.size() == ocps_.size(),
            "centralized: agent count mismatch");
    for (std::size_t i = 0; i < ocps_.size(); ++i) {
      StepData d = refs[i];
      d.x_hat = estimates[i].x();
      d.d_hat = estimates[i].d();
      d.u_prev = committed_[i];
      ocps_[i].set_step(d);
    }
    auto r = centralized_sqp(ocps_, map_, z_, set_.tol, set_.max_sqp, set_.qp);
    z_ = r.z;
    for (std::size_t i = 0; i < ocps_.size(); ++i) {
      const auto& l = ocps_[i].layout();
      committed_[i] =
          z_[i].segment(l.u(1), kInputDim).cwiseMax(-u_max_).cwiseMin(u_max_);
    }
    return committed_;
  }

  const std::vector<Vec>& committed() const { return committed_; }
  const std::vector<Vec>& plan() const { return z_; }
  std::vector<AgentOcp>& ocps() { return ocps_; }
  const CouplingMap& map() const { return map_; }

 private:
  std::vector<AgentOcp> ocps_;
  CouplingMap map_;
  CentralizedSettings set_;
  int N_ = 0;
  Vec u_max_;
  std::vector<Vec> z_, committed_;
};

}  // namespace dmpc
