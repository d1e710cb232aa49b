#pragma once

#include <cstdint>
#include <limits>
#include <deque>
#include <map>
#include <vector>

#include "dmpc/admm.hpp"
#include "dmpc/estimator.hpp"
#include "dmpc/netsim.hpp"
#include "dmpc/ocp.hpp"

namespace dmpc {

struct ControllerSettings {
  int k_max = 1;
  int l_max = 30;
  double rho = 4.0;
  double max_wait_ms = 25.0;
  double deadline_fraction = 0.75;  // waiting is allowed until this share of dt
  bool shifted_warm_start = false;  // default: reuse the previous iterate as-is

  // Virtual compute-cost model: keeps deadline decisions deterministic while
  // approximating a small embedded solver. One local QP costs base plus a
  // per-interior-point-iteration increment; linearization and bookkeeping are
  // charged once per outer iteration.
  double qp_base_ms = 0.2;
  double qp_iter_ms = 0.12;
  double overhead_ms = 0.2;

  // Test hook: floor on the step's total duration as a fraction of dt, to
  // emulate a controller that needs the whole interval.
  double forced_delay_fraction = 0.0;

  QpSettings qp;
};

struct StepTelemetry {
  int t = 0;
  bool timely = true;
  bool fallback = false;   // non-finite guard tripped this step
  int async_w = 0;         // substituted copy payloads over all inner iterations
  int async_avg = 0;       // substituted average payloads
  int qp_iters = 0;
  int inaccurate = 0;      // local solves that hit the iteration cap
  double compute_ms = 0.0;
  double wait_ms = 0.0;
  double commit_ms = 0.0;  // virtual time from step start to input commit
  double consensus_residual = 0.0;
};

// One agent's controller: outer linearization loop around an inner consensus
// loop, exchanging trajectory copies and averages with graph neighbors through
// the bus. The harness drives the phases of all agents in lockstep so every
// send of an iteration is on the bus before anyone waits on it. Committing
// u[1] (not u[0]) gives the loop one full interval of slack between measuring
// and actuating.
class DrtiController {
 public:
  DrtiController(const CouplingGraph& graph, int agent, int horizon, const DiscreteModel& model,
                 const WeightSet& weights, const BoundsConfig& bounds, bool obstacle,
                 double obstacle_radius, const ControllerSettings& s)
      : ocp_(graph, agent, horizon, model, weights, bounds, obstacle, obstacle_radius),
        set_(s),
        agent_(agent),
        N_(horizon),
        dt_ms_(model.dt * 1000.0),
        u_max_(bounds.u_max) {
    require(s.k_max >= 1 && s.l_max >= 1, "controller: iteration budgets must be positive");
    require(horizon >= 2, "controller: horizon must cover the committed stage u[1]");
    require(s.rho > 0.0, "controller: rho must be positive");
    const auto& l = ocp_.layout();
    st_.z = Vec::Zero(l.dim());
    st_.zbar = st_.z;
    st_.gamma = Vec::Zero(l.dim());
    local_.reset(ocp_.problem(), s.rho, s.qp);
    committed_ = Vec::Zero(kInputDim);
    plan_u_ = Mat::Zero(kInputDim, N_);
  }

  // Seeds the cold-start iterate: constant hold of the own and neighbor
  // initial states with zero inputs. Call once before the first step.
  void initialize(const Vec& own_x0, const std::map<int, Vec>& neighbor_x0) {
    const auto& l = ocp_.layout();
    for (int t = 0; t <= N_; ++t) st_.z.segment(l.x(t), kStateDim) = own_x0;
    for (int j : l.neighbors()) {
      const Vec& xj = neighbor_x0.at(j);
      for (int t = 0; t <= N_; ++t) st_.z.segment(l.w(j, t), kStateDim) = xj;
    }
    st_.zbar = st_.z;
  }

  void begin_step(int t, const ExtendedState& estimate, const StepData& refs,
                  double step_start_ms) {
    tel_ = StepTelemetry{};
    tel_.t = t;
    expected_epoch_ = static_cast<std::uint64_t>(t);
    start_ms_ = step_start_ms;
    elapsed_ms_ = 0.0;
    k_ = 0;

    StepData d = refs;
    d.x_hat = estimate.x();
    d.d_hat = estimate.d();
    d.u_prev = committed_;  // the input being applied during this interval
    if (set_.shifted_warm_start) shift_warm_start();
    st_.zbar = st_.z;  // carried consensus vector; equal to z between steps
    ocp_.set_step(d);

    // Seed the fallback buffers with warm-start knowledge: a neighbor's copy
    // of our trajectory defaults to our own iterate with a zero multiplier,
    // a neighbor's average to our copy of its trajectory.
    const auto& l = ocp_.layout();
    const int traj = (N_ + 1) * kStateDim;
    for (int j : l.neighbors()) {
      Vec wseed(2 * traj);
      wseed.head(traj) = st_.z.head(traj);
      wseed.tail(traj).setZero();
      stale_w_[j] = wseed;
      stale_avg_[j] = st_.z.segment(l.w_base(j), traj);
      tag_w_[j] = tag_avg_[j] = std::numeric_limits<std::int64_t>::min();
    }
  }

  // Outer iteration entry: linearize the avoidance rows at the current
  // iterate and refresh the local solver. The proximal anchor carries over
  // from the previous inner loop (it equals the current iterate).
  void begin_outer() {
    ocp_.relinearize(st_.z);
    local_.refresh(ocp_.problem());
    charge(set_.overhead_ms);
  }

  // Inner phase 1: local QP step, then share each neighbor-trajectory copy
  // together with its multiplier.
  void solve_and_send(MessageBus& bus) {
    const auto& sol = local_.solve(st_.zbar, st_.gamma);
    if (!sol.z.allFinite() || !(sol.ok() || sol.status == QpStatus::MaxIter)) {
      tel_.fallback = true;
      return;  // keep the previous iterate; commit falls back at step end
    }
    if (sol.status == QpStatus::MaxIter) ++tel_.inaccurate;
    st_.z = sol.z;
    tel_.qp_iters += sol.iters;
    charge(set_.qp_base_ms + set_.qp_iter_ms * sol.iters);

    const auto& lay = ocp_.layout();
    const int traj = (N_ + 1) * kStateDim;
    for (int j : lay.neighbors()) {
      AdmmMessage m;
      m.kind = MsgKind::CopyAndMultiplier;
      m.k = k_;
      m.l = l_;
      m.sender = agent_;
      m.receiver = j;
      m.payload.resize(2 * traj);
      m.payload.head(traj) = st_.z.segment(lay.w_base(j), traj);
      m.payload.tail(traj) = st_.gamma.segment(lay.w_base(j), traj);
      bus.send(m, now());
    }
  }

  // Inner phase 2: collect the neighbors' copies of our trajectory, average,
  // and share the result.
  void exchange_and_average(MessageBus& bus) {
    const auto& lay = ocp_.layout();
    const int traj = (N_ + 1) * kStateDim;

    auto got = wait_for(bus, MsgKind::CopyAndMultiplier);
    std::map<int, Vec> fresh;
    for (auto& m : got) fresh[static_cast<int>(m.sender)] = std::move(m.payload);
    auto filled = async_substitute(lay.neighbors(), fresh, stale_w_);
    tel_.async_w += filled.substituted;

    std::vector<Vec> copies, gammas;
    for (const auto& p : filled.payloads) {
      copies.push_back(p.head(traj));
      gammas.push_back(p.tail(traj));
    }
    xbar_ = admm_average(st_.z.head(traj), st_.gamma.head(traj), copies, gammas, set_.rho);

    for (int j : lay.neighbors()) {
      AdmmMessage m;
      m.kind = MsgKind::Average;
      m.k = k_;
      m.l = l_;
      m.sender = agent_;
      m.receiver = j;
      m.payload = xbar_;
      bus.send(m, now());
    }
  }

  // Inner phase 3: collect the neighbors' averages, rebuild the consensus
  // vector, and update the multipliers.
  void collect_and_update(MessageBus& bus) {
    const auto& lay = ocp_.layout();
    const int traj = (N_ + 1) * kStateDim;

    auto got = wait_for(bus, MsgKind::Average);
    std::map<int, Vec> fresh;
    for (auto& m : got) fresh[static_cast<int>(m.sender)] = std::move(m.payload);
    auto filled = async_substitute(lay.neighbors(), fresh, stale_avg_);
    tel_.async_avg += filled.substituted;

    st_.zbar = st_.z + st_.gamma / set_.rho;
    st_.zbar.head(traj) = xbar_;
    for (std::size_t idx = 0; idx < lay.neighbors().size(); ++idx)
      st_.zbar.segment(lay.w_base(lay.neighbors()[idx]), traj) = filled.payloads[idx];
    st_.gamma = multiplier_update(st_.gamma, st_.z, st_.zbar, set_.rho);
    ++l_;
  }

  // Outer iteration exit: the averaged trajectories become the next
  // linearization point.
  void end_outer() {
    tel_.consensus_residual = (st_.z - st_.zbar).lpNorm<Eigen::Infinity>();
    st_.z = st_.zbar;
    ++k_;
    l_ = 0;
  }

  // Extracts and commits the input for the next interval.
  const Vec& finish_step(StepTelemetry* out) {
    if (set_.forced_delay_fraction > 0.0)
      elapsed_ms_ = std::max(elapsed_ms_, set_.forced_delay_fraction * dt_ms_);
    tel_.commit_ms = elapsed_ms_;
    tel_.timely = elapsed_ms_ <= dt_ms_;

    if (!st_.z.allFinite() || !st_.gamma.allFinite()) {
      tel_.fallback = true;
      reset_iterate();
    }

    const auto& lay = ocp_.layout();
    if (tel_.timely && !tel_.fallback) {
      for (int t = 0; t < N_; ++t) plan_u_.col(t) = st_.z.segment(lay.u(t), kInputDim);
      plan_age_ = 0;
    } else {
      ++plan_age_;  // keep following the last good plan, one stage further on
    }
    const int idx = std::min(1 + plan_age_, N_ - 1);
    committed_ = plan_u_.col(idx).cwiseMax(-u_max_).cwiseMin(u_max_);

    if (out) *out = tel_;
    return committed_;
  }

  const Vec& committed() const { return committed_; }
  const AdmmState& state() const { return st_; }
  const AgentOcp& ocp() const { return ocp_; }
  int agent() const { return agent_; }

 private:
  double now() const { return start_ms_ + elapsed_ms_; }

  void charge(double ms) {
    elapsed_ms_ += ms;
    tel_.compute_ms += ms;
  }

  // Shared wait logic for both exchange phases: wait for the expected tags up
  // to the deadline policy budget, advance the virtual clock, and fold every
  // late or stale delivery into the fallback buffers.
  std::vector<AdmmMessage> wait_for(MessageBus& bus, MsgKind kind) {
    const auto& lay = ocp_.layout();
    std::vector<Expected> want;
    for (int j : lay.neighbors())
      want.push_back({kind, static_cast<std::uint32_t>(k_), static_cast<std::uint32_t>(l_), j});

    const double budget =
        std::min(set_.max_wait_ms, std::max(0.0, set_.deadline_fraction * dt_ms_ - elapsed_ms_));
    auto r = bus.receive_until(agent_, now(), now() + budget, want);
    tel_.wait_ms += r.time_ms - now();
    elapsed_ms_ = r.time_ms - start_ms_;

    for (auto& sm : r.others) absorb_stale(sm.epoch, std::move(sm.msg));
    for (const auto& m : r.matched) remember_tag(m);
    return std::move(r.matched);
  }

  // Stale-buffer refresh: newest (step, k, l) wins, matching the rule that a
  // missing payload is replaced by the most recent value from that neighbor.
  std::int64_t tag_of(const AdmmMessage& m) const {
    return (static_cast<std::int64_t>(m.k) << 32) | m.l;
  }

  void remember_tag(const AdmmMessage& m) {
    auto& slot = m.kind == MsgKind::CopyAndMultiplier ? tag_w_ : tag_avg_;
    slot[static_cast<int>(m.sender)] = tag_of(m);
  }

  void absorb_stale(std::uint64_t epoch, AdmmMessage m) {
    // Leftovers from earlier control steps are drained but not reused; the
    // warm-start seeds already cover the cross-step fallback. Within the
    // current step, the newest (k, l) tag wins.
    if (epoch != expected_epoch_) return;
    const int j = static_cast<int>(m.sender);
    auto& tags = m.kind == MsgKind::CopyAndMultiplier ? tag_w_ : tag_avg_;
    auto& buf = m.kind == MsgKind::CopyAndMultiplier ? stale_w_ : stale_avg_;
    auto it = tags.find(j);
    if (it == tags.end()) return;  // not a neighbor payload we track
    const std::int64_t tag = tag_of(m);
    if (tag < it->second) return;
    const int traj = (N_ + 1) * kStateDim;
    const int want = m.kind == MsgKind::CopyAndMultiplier ? 2 * traj : traj;
    if (m.payload.size() != want) return;
    it->second = tag;
    buf[j] = std::move(m.payload);
  }

  void shift_warm_start() {
    const auto& lay = ocp_.layout();
    auto shift_traj = [&](Vec& v, int base) {
      for (int t = 0; t < N_; ++t)
        v.segment(base + t * kStateDim, kStateDim) =
            v.segment(base + (t + 1) * kStateDim, kStateDim);
    };
    for (Vec* v : {&st_.z, &st_.gamma}) {
      shift_traj(*v, 0);
      for (int t = 0; t + 1 < N_; ++t)
        v->segment(lay.u(t), kInputDim) = v->segment(lay.u(t + 1), kInputDim);
      for (int j : lay.neighbors()) shift_traj(*v, lay.w_base(j));
    }
  }

  void reset_iterate() {
    st_.z.setZero();
    st_.gamma.setZero();
    const auto& lay = ocp_.layout();
    const Vec hold = ocp_.reference_vector().segment(lay.x(0), kStateDim);
    for (int t = 0; t <= N_; ++t) st_.z.segment(lay.x(t), kStateDim) = hold;
    st_.zbar = st_.z;
  }

  AgentOcp ocp_;
  AdmmLocalSolver local_;
  ControllerSettings set_;
  AdmmState st_;
  Vec xbar_;
  Vec committed_, u_max_;
  Mat plan_u_;
  int plan_age_ = 0;
  int agent_ = 0, N_ = 0, k_ = 0, l_ = 0;
  std::uint64_t expected_epoch_ = 0;
  double dt_ms_ = 0.0, start_ms_ = 0.0, elapsed_ms_ = 0.0;
  StepTelemetry tel_;
  std::map<int, Vec> stale_w_, stale_avg_;
  std::map<int, std::int64_t> tag_w_, tag_avg_;

 public:
  const ControllerSettings& settings() const { return set_; }
  void set_forced_delay(double fraction) { set_.forced_delay_fraction = fraction; }
};

// Runs one control step for all agents in lockstep: every send of a phase is
// on the bus before any agent of the next phase waits for it, which is how
// concurrently executing controllers interleave. Returns the inputs committed
// for the next interval. The container must not relocate controllers (they
// hold factorization caches); std::deque fits.
template <class ControllerSeq>
inline std::vector<Vec> drti_step_all(ControllerSeq& cs, MessageBus& bus, int t,
                                      const std::vector<ExtendedState>& estimates,
                                      const std::vector<StepData>& refs, double step_start_ms,
                                      std::vector<StepTelemetry>* telemetry = nullptr) {
  require(!cs.empty() && cs.size() == estimates.size() && cs.size() == refs.size(),
          "drti_step_all: agent count mismatch");
  const int k_max = cs.front().settings().k_max;
  const int l_max = cs.front().settings().l_max;
  bus.set_epoch(t);
  for (std::size_t i = 0; i < cs.size(); ++i)
    cs[i].begin_step(t, estimates[i], refs[i], step_start_ms);
  for (int k = 0; k < k_max; ++k) {
    for (auto& c : cs) c.begin_outer();
    for (int l = 0; l < l_max; ++l) {
      for (auto& c : cs) c.solve_and_send(bus);
      for (auto& c : cs) c.exchange_and_average(bus);
      for (auto& c : cs) c.collect_and_update(bus);
    }
    for (auto& c : cs) c.end_outer();
  }
  if (telemetry) telemetry->resize(cs.size());
  std::vector<Vec> committed;
  for (std::size_t i = 0; i < cs.size(); ++i)
    committed.push_back(cs[i].finish_step(telemetry ? &(*telemetry)[i] : nullptr));
  return committed;
}

}  // namespace dmpc
