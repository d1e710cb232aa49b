#pragma once

#include <vector>

#include "dmpc/layout.hpp"
#include "dmpc/model.hpp"
#include "dmpc/qp.hpp"
#include "dmpc/weights.hpp"

namespace dmpc {

// Workspace geometry and hard limits. Table bounds constrain the body center:
// the usable box is the table shrunk by the safety margin plus body radius.
struct BoundsConfig {
  double table_x0 = 0.0, table_x1 = 1.0;
  double table_y0 = 0.0, table_y1 = 0.6;
  double margin = 0.03;
  double body_diameter = 0.15;
  double d_min = 0.2;  // center-center separation between agents
  Vec u_max = (Vec(3) << 5.0, 5.0, 15.0).finished();

  double x_lo() const { return table_x0 + margin + 0.5 * body_diameter; }
  double x_hi() const { return table_x1 - margin - 0.5 * body_diameter; }
  double y_lo() const { return table_y0 + margin + 0.5 * body_diameter; }
  double y_hi() const { return table_y1 - margin - 0.5 * body_diameter; }

  // Center-center clearance against a disk obstacle keeps the same free gap
  // as the agent-agent rule: d_min - body_diameter between hulls.
  double obstacle_d_min(double obstacle_radius) const {
    return d_min - 0.5 * body_diameter + obstacle_radius;
  }
};

// Centralized stage and terminal cost on stacked states (6S), inputs (3S).
inline double stage_cost(const WeightSet& w, const Vec& x_all, const Vec& u_all,
                         const Vec& x_ref, const Vec& u_ref) {
  const Vec xe = x_all - x_ref;
  const Vec ue = u_all - u_ref;
  double c = 0.5 * xe.dot(w.Q_central * xe);
  for (int i = 0; i < w.agents; ++i) {
    const Vec ui = ue.segment(kInputDim * i, kInputDim);
    c += 0.5 * ui.dot(w.R[i] * ui);
  }
  return c;
}

inline double terminal_cost(const WeightSet& w, const Vec& x_all, const Vec& x_ref) {
  const Vec xe = x_all - x_ref;
  return 0.5 * xe.dot(w.P_central * xe);
}

// First-order model of the keep-out condition d_min^2 - |p - o|^2 <= 0 at the
// current iterate. Coincident points get a deterministic separating direction
// along +-x chosen by ownership so paired agents disagree and split apart.
struct AvoidanceRow {
  Eigen::Vector2d grad_p;  // gradient w.r.t. the own position
  Eigen::Vector2d grad_o;  // gradient w.r.t. the other position
  double h0 = 0.0;         // constraint value at the linearization point
};

inline AvoidanceRow linearize_avoidance(const Eigen::Vector2d& p,
                                        const Eigen::Vector2d& o, double d_min,
                                        bool own_side) {
  AvoidanceRow r;
  Eigen::Vector2d d = p - o;
  const double dist2 = d.squaredNorm();
  r.h0 = d_min * d_min - dist2;
  if (dist2 < 1e-16) d = Eigen::Vector2d(own_side ? d_min : -d_min, 0.0);
  r.grad_p = -2.0 * d;
  r.grad_o = 2.0 * d;
  return r;
}

// Everything the subproblem needs from the current control step.
struct StepData {
  Vec x_hat = Vec::Zero(kStateDim);
  Vec u_prev = Vec::Zero(kInputDim);  // input already committed for this interval
  Vec d_hat = Vec::Zero(kInputDim);
  std::vector<Vec> x_ref;                // N+1 own references
  std::vector<Vec> u_ref;                // N input references (feedforward)
  std::vector<std::vector<Vec>> w_ref;   // per neighbor (layout order), N+1 refs
  std::vector<Eigen::Vector2d> obs_pos;  // N+1 predicted obstacle positions
};

// Per-agent quadratic subproblem with fixed sparsity. The Hessian and the
// equality Jacobian never change; references and estimates enter through the
// linear terms, and the avoidance rows are refreshed at each linearization
// point.
class AgentOcp {
 public:
  AgentOcp(const CouplingGraph& graph, int agent, int horizon, const DiscreteModel& model,
           const WeightSet& weights, const BoundsConfig& bounds, bool obstacle,
           double obstacle_radius = 0.0)
      : layout_(graph, agent, horizon, obstacle),
        model_(model),
        bounds_(bounds),
        agent_(agent),
        N_(horizon),
        obs_d_min_(obstacle ? bounds.obstacle_d_min(obstacle_radius) : 0.0),
        mu_(weights.mu) {
    for (int j : layout_.neighbors()) {
      Wn_.push_back(weights.W_of(agent, j));
      Mn_.push_back(weights.theta * weights.M_of(agent, j));
      nbr_owner_side_.push_back(agent < j);
    }
    Qself_ = weights.Qself[agent];
    Pself_ = weights.Pself[agent];
    Rw_ = weights.R[agent];
    prob_.q = Vec::Zero(layout_.dim());
    ref_ = Vec::Zero(layout_.dim());
    lin_point_ = Vec::Zero(layout_.dim());
    build_hessian();
    build_equalities();
    build_inequality_pattern();
  }

  const DecisionLayout& layout() const { return layout_; }
  const QpProblem& problem() const { return prob_; }
  const Vec& reference_vector() const { return ref_; }
  const Vec& linearization_point() const { return lin_point_; }

  void set_step(const StepData& d) {
    require(static_cast<int>(d.x_ref.size()) == N_ + 1, "ocp: need N+1 state references");
    require(static_cast<int>(d.u_ref.size()) == N_, "ocp: need N input references");
    require(static_cast<int>(d.w_ref.size()) == static_cast<int>(layout_.neighbors().size()),
            "ocp: need references for every neighbor");
    require(d.x_hat.allFinite() && d.u_prev.allFinite() && d.d_hat.allFinite(),
            "ocp: non-finite step data");
    if (layout_.has_obstacle())
      require(static_cast<int>(d.obs_pos.size()) == N_ + 1,
              "ocp: need N+1 obstacle positions");
    step_ = d;

    for (int t = 0; t <= N_; ++t) ref_.segment(layout_.x(t), kStateDim) = d.x_ref[t];
    for (int t = 0; t < N_; ++t)
      ref_.segment(layout_.u(t), kInputDim) = d.u_ref[t] - d.d_hat;
    for (std::size_t k = 0; k < layout_.neighbors().size(); ++k) {
      require(static_cast<int>(d.w_ref[k].size()) == N_ + 1,
              "ocp: neighbor references need N+1 entries");
      for (int t = 0; t <= N_; ++t)
        ref_.segment(layout_.w(layout_.neighbors()[k], t), kStateDim) = d.w_ref[k][t];
    }
    prob_.q = -(prob_.H * ref_);

    prob_.g.segment(0, kStateDim) = d.x_hat;
    prob_.g.segment(kStateDim, kInputDim) = d.u_prev;
    const Vec bd = model_.B * d.d_hat;
    for (int t = 0; t < N_; ++t)
      prob_.g.segment(kStateDim + kInputDim + t * kStateDim, kStateDim) = bd;
    refresh_avoidance();
  }

  // Rebuild the avoidance rows around a new iterate.
  void relinearize(const Vec& z) {
    require(z.size() == layout_.dim(), "ocp: iterate size mismatch");
    require(z.allFinite(), "ocp: non-finite iterate");
    lin_point_ = z;
    refresh_avoidance();
  }

  // Quadratic cost of the subproblem (matches q up to the constant term).
  double eval_f(const Vec& z) const {
    const Vec e = z - ref_;
    return 0.5 * e.dot(prob_.H * e);
  }

  // First inequality row of each section, in assembly order.
  int row_box() const { return box_row_; }
  int row_input() const { return input_row_; }
  int row_neighbor() const { return nbr_row_; }
  int row_obstacle() const { return obs_row_; }
  int row_slack() const { return slack_row_; }

  Vec grad_f(const Vec& z) const { return prob_.H * (z - ref_); }

  Vec eval_g(const Vec& z) const { return prob_.G * z - prob_.g; }

  // Nonlinear inequality values in C-row order (<= 0 feasible). Linear rows
  // coincide with their linearization; avoidance rows use the true distance.
  Vec eval_h(const Vec& z) const {
    Vec h(prob_.c.size());
    int row = 0;
    for (int t = 0; t <= N_; ++t) {
      const double px = z(layout_.x(t)), py = z(layout_.x(t) + 1);
      h(row++) = px - z(layout_.s_box(t, 0)) - bounds_.x_hi();
      h(row++) = -px - z(layout_.s_box(t, 1)) + bounds_.x_lo();
      h(row++) = py - z(layout_.s_box(t, 2)) - bounds_.y_hi();
      h(row++) = -py - z(layout_.s_box(t, 3)) + bounds_.y_lo();
    }
    for (int t = 0; t < N_; ++t)
      for (int a = 0; a < kInputDim; ++a) {
        h(row++) = z(layout_.u(t) + a) - bounds_.u_max(a);
        h(row++) = -z(layout_.u(t) + a) - bounds_.u_max(a);
      }
    for (int j : layout_.neighbors())
      for (int t = 0; t <= N_; ++t) {
        Eigen::Vector2d p(z(layout_.x(t)), z(layout_.x(t) + 1));
        Eigen::Vector2d o(z(layout_.w(j, t)), z(layout_.w(j, t) + 1));
        h(row++) = bounds_.d_min * bounds_.d_min - (p - o).squaredNorm() -
                   z(layout_.s_nbr(j, t));
      }
    if (layout_.has_obstacle())
      for (int t = 0; t <= N_; ++t) {
        Eigen::Vector2d p(z(layout_.x(t)), z(layout_.x(t) + 1));
        h(row++) = obs_d_min_ * obs_d_min_ - (p - step_.obs_pos[t]).squaredNorm() -
                   z(layout_.s_obs(t));
      }
    for (int d = layout_.core_dim(); d < layout_.dim(); ++d) h(row++) = -z(d);
    check(row == prob_.c.size(), "ocp: inequality row bookkeeping broken");
    return h;
  }

 private:
  void add_sym_block(std::vector<Triplet>& t, int r, int c, const Mat& m) {
    for (int a = 0; a < m.rows(); ++a)
      for (int b = 0; b < m.cols(); ++b)
        if (m(a, b) != 0.0) t.emplace_back(r + a, c + b, m(a, b));
  }

  void build_hessian() {
    std::vector<Triplet> t;
    const auto& nbrs = layout_.neighbors();
    for (int tau = 0; tau <= N_; ++tau) {
      const bool terminal = (tau == N_);
      Mat xblk = terminal ? Pself_ : Qself_;
      for (std::size_t k = 0; k < nbrs.size(); ++k) {
        const Mat& W = terminal ? Mn_[k] : Wn_[k];
        xblk += 0.5 * W;
        add_sym_block(t, layout_.x(tau), layout_.w(nbrs[k], tau), -0.5 * W);
        add_sym_block(t, layout_.w(nbrs[k], tau), layout_.x(tau), -0.5 * W);
        add_sym_block(t, layout_.w(nbrs[k], tau), layout_.w(nbrs[k], tau), 0.5 * W);
      }
      add_sym_block(t, layout_.x(tau), layout_.x(tau), xblk);
    }
    for (int tau = 0; tau < N_; ++tau) add_sym_block(t, layout_.u(tau), layout_.u(tau), Rw_);
    for (int d = layout_.core_dim(); d < layout_.dim(); ++d) t.emplace_back(d, d, mu_);
    for (int d = 0; d < layout_.dim(); ++d) t.emplace_back(d, d, 0.0);  // keep full diagonal
    prob_.H.resize(layout_.dim(), layout_.dim());
    prob_.H.setFromTriplets(t.begin(), t.end());
    prob_.H.makeCompressed();
  }

  void build_equalities() {
    const int rows = kStateDim + kInputDim + N_ * kStateDim;
    std::vector<Triplet> t;
    for (int a = 0; a < kStateDim; ++a) t.emplace_back(a, layout_.x(0) + a, 1.0);
    for (int a = 0; a < kInputDim; ++a)
      t.emplace_back(kStateDim + a, layout_.u(0) + a, 1.0);
    for (int tau = 0; tau < N_; ++tau) {
      const int r = kStateDim + kInputDim + tau * kStateDim;
      for (int a = 0; a < kStateDim; ++a) t.emplace_back(r + a, layout_.x(tau + 1) + a, 1.0);
      for (int a = 0; a < kStateDim; ++a)
        for (int b = 0; b < kStateDim; ++b)
          if (model_.A(a, b) != 0.0) t.emplace_back(r + a, layout_.x(tau) + b, -model_.A(a, b));
      for (int a = 0; a < kStateDim; ++a)
        for (int b = 0; b < kInputDim; ++b)
          if (model_.B(a, b) != 0.0) t.emplace_back(r + a, layout_.u(tau) + b, -model_.B(a, b));
    }
    prob_.G.resize(rows, layout_.dim());
    prob_.G.setFromTriplets(t.begin(), t.end());
    prob_.G.makeCompressed();
    prob_.g = Vec::Zero(rows);
  }

  void build_inequality_pattern() {
    int rows = 4 * (N_ + 1) + 2 * kInputDim * N_ +
               static_cast<int>(layout_.neighbors().size()) * (N_ + 1) +
               (layout_.has_obstacle() ? (N_ + 1) : 0) + layout_.slack_dim();
    prob_.c = Vec::Zero(rows);
    box_row_ = 0;
    input_row_ = 4 * (N_ + 1);
    nbr_row_ = input_row_ + 2 * kInputDim * N_;
    obs_row_ = nbr_row_ + static_cast<int>(layout_.neighbors().size()) * (N_ + 1);
    slack_row_ = obs_row_ + (layout_.has_obstacle() ? (N_ + 1) : 0);
    refresh_avoidance();
  }

  // Rebuilds C and c entirely; constant rows are recomputed to keep a single
  // assembly path and a stable sparsity pattern.
  void refresh_avoidance() {
    std::vector<Triplet> t;
    const int rows = static_cast<int>(prob_.c.size());
    int row = box_row_;
    for (int tau = 0; tau <= N_; ++tau) {
      t.emplace_back(row, layout_.x(tau), 1.0);
      t.emplace_back(row, layout_.s_box(tau, 0), -1.0);
      prob_.c(row++) = bounds_.x_hi();
      t.emplace_back(row, layout_.x(tau), -1.0);
      t.emplace_back(row, layout_.s_box(tau, 1), -1.0);
      prob_.c(row++) = -bounds_.x_lo();
      t.emplace_back(row, layout_.x(tau) + 1, 1.0);
      t.emplace_back(row, layout_.s_box(tau, 2), -1.0);
      prob_.c(row++) = bounds_.y_hi();
      t.emplace_back(row, layout_.x(tau) + 1, -1.0);
      t.emplace_back(row, layout_.s_box(tau, 3), -1.0);
      prob_.c(row++) = -bounds_.y_lo();
    }
    for (int tau = 0; tau < N_; ++tau)
      for (int a = 0; a < kInputDim; ++a) {
        t.emplace_back(row, layout_.u(tau) + a, 1.0);
        prob_.c(row++) = bounds_.u_max(a);
        t.emplace_back(row, layout_.u(tau) + a, -1.0);
        prob_.c(row++) = bounds_.u_max(a);
      }
    const auto& nbrs = layout_.neighbors();
    for (std::size_t k = 0; k < nbrs.size(); ++k)
      for (int tau = 0; tau <= N_; ++tau) {
        const int xo = layout_.x(tau), wo = layout_.w(nbrs[k], tau);
        Eigen::Vector2d p(lin_point_(xo), lin_point_(xo + 1));
        Eigen::Vector2d o(lin_point_(wo), lin_point_(wo + 1));
        auto lin = linearize_avoidance(p, o, bounds_.d_min, nbr_owner_side_[k]);
        t.emplace_back(row, xo, lin.grad_p(0));
        t.emplace_back(row, xo + 1, lin.grad_p(1));
        t.emplace_back(row, wo, lin.grad_o(0));
        t.emplace_back(row, wo + 1, lin.grad_o(1));
        t.emplace_back(row, layout_.s_nbr(nbrs[k], tau), -1.0);
        prob_.c(row++) = lin.grad_p.dot(p) + lin.grad_o.dot(o) - lin.h0;
      }
    if (layout_.has_obstacle()) {
      const bool have_obs = static_cast<int>(step_.obs_pos.size()) == N_ + 1;
      for (int tau = 0; tau <= N_; ++tau) {
        const int xo = layout_.x(tau);
        Eigen::Vector2d p(lin_point_(xo), lin_point_(xo + 1));
        Eigen::Vector2d o = have_obs ? step_.obs_pos[tau] : Eigen::Vector2d(1e6, 1e6);
        auto lin = linearize_avoidance(p, o, obs_d_min_, true);
        t.emplace_back(row, xo, lin.grad_p(0));
        t.emplace_back(row, xo + 1, lin.grad_p(1));
        t.emplace_back(row, layout_.s_obs(tau), -1.0);
        prob_.c(row++) = lin.grad_p.dot(p) - lin.h0;
      }
    }
    for (int d = layout_.core_dim(); d < layout_.dim(); ++d) {
      t.emplace_back(row, d, -1.0);
      prob_.c(row++) = 0.0;
    }
    check(row == rows, "ocp: inequality assembly row mismatch");
    prob_.C.resize(rows, layout_.dim());
    prob_.C.setFromTriplets(t.begin(), t.end());
    prob_.C.makeCompressed();
  }

  DecisionLayout layout_;
  DiscreteModel model_;
  BoundsConfig bounds_;
  int agent_ = 0, N_ = 0;
  double obs_d_min_ = 0.0, mu_ = 0.0;
  Mat Qself_, Pself_, Rw_;
  std::vector<Mat> Wn_, Mn_;
  std::vector<bool> nbr_owner_side_;
  StepData step_;
  Vec ref_, lin_point_;
  QpProblem prob_;
  int box_row_ = 0, input_row_ = 0, nbr_row_ = 0, obs_row_ = 0, slack_row_ = 0;
};

}  // namespace dmpc
