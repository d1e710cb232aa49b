#pragma once

#include <map>
#include <vector>

#include "dmpc/layout.hpp"
#include "dmpc/qp.hpp"

namespace dmpc {

// Per-agent consensus iterate. zbar carries the agreed trajectories: the own
// block holds the neighborhood average, copy blocks hold the owners' averages,
// and every uncoupled entry (inputs, slacks) holds the exact minimizer of the
// averaging step for a singleton group, z + gamma/rho.
struct AdmmState {
  Vec z, zbar, gamma;
  int k = 0, l = 0;
};

// Neighborhood average of one trajectory: the owner's block plus every copy,
// each shifted by its scaled multiplier. Callers pass copies in ascending
// sender order so the accumulation order is reproducible.
inline Vec admm_average(const Vec& own, const Vec& own_gamma, const std::vector<Vec>& copies,
                        const std::vector<Vec>& copy_gammas, double rho) {
  require(copies.size() == copy_gammas.size(), "admm: copy/multiplier count mismatch");
  require(own.size() == own_gamma.size(), "admm: own multiplier size mismatch");
  require(rho > 0.0, "admm: rho must be positive");
  Vec acc = own + own_gamma / rho;
  for (std::size_t i = 0; i < copies.size(); ++i) {
    require(copies[i].size() == own.size() && copy_gammas[i].size() == own.size(),
            "admm: copy size mismatch");
    acc += copies[i] + copy_gammas[i] / rho;
  }
  return acc / (1.0 + static_cast<double>(copies.size()));
}

inline Vec multiplier_update(const Vec& gamma, const Vec& z, const Vec& zbar, double rho) {
  require(gamma.size() == z.size() && z.size() == zbar.size(),
          "admm: multiplier update size mismatch");
  return gamma + rho * (z - zbar);
}

// Fills the expected payload slots from fresh messages where available and
// from the stale buffer otherwise; fresh values refresh the buffer. The buffer
// must be seeded (warm-start values) before the first use.
struct SubstitutionResult {
  std::vector<Vec> payloads;  // one per expected entry, in the given order
  int substituted = 0;
};

inline SubstitutionResult async_substitute(const std::vector<int>& expected,
                                           const std::map<int, Vec>& received,
                                           std::map<int, Vec>& stale) {
  SubstitutionResult r;
  for (int j : expected) {
    auto f = received.find(j);
    if (f != received.end()) {
      stale[j] = f->second;
      r.payloads.push_back(f->second);
    } else {
      auto s = stale.find(j);
      require(s != stale.end(), "admm: no fallback value seeded for neighbor");
      r.payloads.push_back(s->second);
      ++r.substituted;
    }
  }
  return r;
}

// Local minimization step: the agent subproblem augmented by the consensus
// penalty rho/2 ||z - zbar||^2 with multiplier term gamma' z. The augmented
// Hessian is fixed, so the solver keeps its factorization pattern and warm
// start across iterations; only the linear term moves.
class AdmmLocalSolver {
 public:
  AdmmLocalSolver() = default;

  AdmmLocalSolver(const QpProblem& base, double rho, const QpSettings& settings = {}) {
    reset(base, rho, settings);
  }

  void reset(const QpProblem& base, double rho, const QpSettings& settings = {}) {
    require(rho > 0.0, "admm: rho must be positive");
    rho_ = rho;
    q_base_ = base.q;
    QpProblem aug = base;
    SpMat id(base.n(), base.n());
    id.setIdentity();
    aug.H = base.H + rho * id;
    solver_.set_problem(std::move(aug), settings);
    warm_valid_ = false;
  }

  // After a relinearization: same sparsity, new values.
  void refresh(const QpProblem& base) {
    q_base_ = base.q;
    solver_.update_vectors(nullptr, &base.g, nullptr);
    solver_.update_inequality(base.C, base.c);
    warm_valid_ = false;
  }

  const QpSolution& solve(const Vec& zbar, const Vec& gamma) {
    Vec q = q_base_ + gamma - rho_ * zbar;
    solver_.update_vectors(&q, nullptr, nullptr);
    last_ = warm_valid_ ? solver_.solve(last_) : solver_.solve();
    warm_valid_ = last_.status == QpStatus::Optimal || last_.status == QpStatus::MaxIter;
    return last_;
  }

  double rho() const { return rho_; }

 private:
  QpSolver solver_;
  QpSolution last_;
  Vec q_base_;
  double rho_ = 1.0;
  bool warm_valid_ = false;
};

struct AdmmRunResult {
  std::vector<AdmmState> states;
  double consensus_residual = 0.0;  // max_i ||z_i - zbar_i||_inf after the run
  int inaccurate_solves = 0;        // local steps that hit the iteration cap
};

// Synchronous reference loop over all agents with direct in-memory exchange:
// local step, trajectory averaging, copy write-back, multiplier update. The
// networked controller reproduces these formulas message-by-message.
inline AdmmRunResult admm_run_sync(const std::vector<QpProblem>& probs, const CouplingMap& map,
                                   double rho, int iterations,
                                   const std::vector<AdmmState>* init = nullptr,
                                   const QpSettings& settings = {}) {
  const int S = static_cast<int>(probs.size());
  require(S == static_cast<int>(map.layouts.size()), "admm: problem/layout count mismatch");
  require(iterations >= 1, "admm: need at least one iteration");
  const int traj = map.traj_len;

  AdmmRunResult out;
  out.states.resize(S);
  std::vector<AdmmLocalSolver> solvers(S);
  for (int i = 0; i < S; ++i) {
    const int n = probs[i].n();
    require(n == map.layouts[i].dim(), "admm: problem dimension mismatch");
    solvers[i].reset(probs[i], rho, settings);
    auto& st = out.states[i];
    if (init) {
      st = (*init)[i];
      require(st.z.size() == n && st.zbar.size() == n && st.gamma.size() == n,
              "admm: init state dimension mismatch");
    } else {
      st.z = Vec::Zero(n);
      st.zbar = Vec::Zero(n);
      st.gamma = Vec::Zero(n);
    }
  }

  std::vector<Vec> xbar(S);
  for (int l = 0; l < iterations; ++l) {
    for (int i = 0; i < S; ++i) {
      const auto& sol = solvers[i].solve(out.states[i].zbar, out.states[i].gamma);
      if (sol.status == QpStatus::MaxIter) ++out.inaccurate_solves;
      else check(sol.ok(), "admm: local solve failed");
      out.states[i].z = sol.z;
    }
    for (int i = 0; i < S; ++i) {
      std::vector<Vec> copies, gammas;
      for (int j : map.layouts[i].neighbors()) {
        const int off = map.layouts[j].w_base(i);
        copies.push_back(out.states[j].z.segment(off, traj));
        gammas.push_back(out.states[j].gamma.segment(off, traj));
      }
      xbar[i] = admm_average(out.states[i].z.head(traj), out.states[i].gamma.head(traj),
                             copies, gammas, rho);
    }
    for (int i = 0; i < S; ++i) {
      auto& st = out.states[i];
      st.zbar = st.z + st.gamma / rho;
      st.zbar.head(traj) = xbar[i];
      for (int j : map.layouts[i].neighbors())
        st.zbar.segment(map.layouts[i].w_base(j), traj) = xbar[j];
      st.gamma = multiplier_update(st.gamma, st.z, st.zbar, rho);
      st.l = l + 1;
    }
  }

  for (int i = 0; i < S; ++i)
    out.consensus_residual = std::max(
        out.consensus_residual,
        (out.states[i].z - out.states[i].zbar).lpNorm<Eigen::Infinity>());
  return out;
}

}  // namespace dmpc
