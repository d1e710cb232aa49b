#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dmpc/layout.hpp"
#include "dmpc/types.hpp"

namespace dmpc {

// Convex QP
//   min  1/2 z'Hz + q'z
//   s.t. G z = g,  C z <= c
// H symmetric positive semidefinite; strict convexity on the equality
// manifold is assumed (holds for all problems built in this library).
struct QpProblem {
  SpMat H;
  Vec q;
  SpMat G;
  Vec g;
  SpMat C;
  Vec c;

  int n() const { return static_cast<int>(q.size()); }
  int me() const { return static_cast<int>(g.size()); }
  int mi() const { return static_cast<int>(c.size()); }
};

enum class QpStatus { Optimal, MaxIter, Infeasible, Failed };

struct QpSolution {
  Vec z, y, lam, s;
  QpStatus status = QpStatus::Failed;
  int iters = 0;
  double dual_res = 0.0, eq_res = 0.0, ineq_res = 0.0, comp = 0.0;

  bool ok() const { return status == QpStatus::Optimal; }
};

struct QpSettings {
  double tol = 1e-8;
  int max_iter = 100;
  double reg = 1e-9;        // static regularization on the KKT diagonal
  bool polish = true;       // active-set refinement after convergence
  int refine_steps = 2;     // iterative refinement rounds per KKT solve
  int dense_threshold = 260;
  std::string dump_prefix;  // write problem in matrix-market form when set
};

namespace detail {

inline void write_market(const SpMat& m, const std::string& path) {
  std::ofstream f(path);
  f << "%%MatrixMarket matrix coordinate real general\n";
  f << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      f << it.row() + 1 << " " << it.col() + 1 << " " << it.value() << "\n";
}

inline void write_vec(const Vec& v, const std::string& path) {
  std::ofstream f(path);
  for (int i = 0; i < v.size(); ++i) f << v(i) << "\n";
}

}  // namespace detail

// Interior-point QP solver (Mehrotra predictor-corrector) over the symmetric
// quasi-definite KKT system
//   [ H + dI   G'      C'      ]
//   [ G       -dI      0       ]
//   [ C        0      -S/L - dI]
// factored with a cached-symbolic sparse LDLT (dense LDLT below a size
// threshold). Matrix sparsity is fixed per problem instance so repeated
// solves only refresh numeric values. Solutions are refined against the
// unregularized KKT system and finished with an active-set polish step.
class QpSolver {
 public:
  void set_problem(QpProblem p, const QpSettings& settings = {}) {
    prob_ = std::move(p);
    st_ = settings;
    const int n = prob_.n();
    require(prob_.H.rows() == n && prob_.H.cols() == n, "qp: H dimension mismatch");
    require(prob_.G.rows() == prob_.me() && (prob_.me() == 0 || prob_.G.cols() == n),
            "qp: G dimension mismatch");
    require(prob_.C.rows() == prob_.mi() && (prob_.mi() == 0 || prob_.C.cols() == n),
            "qp: C dimension mismatch");
    require(prob_.q.allFinite() && prob_.g.allFinite() && prob_.c.allFinite(),
            "qp: non-finite problem data");
    dense_ = (n + prob_.me() + prob_.mi()) <= st_.dense_threshold;
    if (!dense_) build_sparse_pattern();
    factor_valid_ = false;
    if (!st_.dump_prefix.empty()) dump(st_.dump_prefix);
  }

  // Cheap refresh when only the linear data changed (matrices untouched).
  void update_vectors(const Vec* q, const Vec* g, const Vec* c) {
    if (q) { require(q->size() == prob_.q.size(), "qp: q size changed"); prob_.q = *q; }
    if (g) { require(g->size() == prob_.g.size(), "qp: g size changed"); prob_.g = *g; }
    if (c) { require(c->size() == prob_.c.size(), "qp: c size changed"); prob_.c = *c; }
  }

  // Refresh inequality matrix values; the sparsity pattern must be unchanged.
  void update_inequality(const SpMat& C, const Vec& c) {
    require(C.rows() == prob_.C.rows() && C.cols() == prob_.C.cols() &&
                C.nonZeros() == prob_.C.nonZeros(),
            "qp: inequality pattern changed");
    prob_.C = C;
    prob_.c = c;
    factor_valid_ = false;
  }

  const QpProblem& problem() const { return prob_; }

  QpSolution solve() { return solve_impl(nullptr); }
  QpSolution solve(const QpSolution& warm) { return solve_impl(&warm); }

 private:
  // ---- KKT assembly ----

  void build_sparse_pattern() {
    const int n = prob_.n(), me = prob_.me(), mi = prob_.mi();
    const int dim = n + me + mi;
    std::vector<Triplet> trips;
    trips.reserve(prob_.H.nonZeros() + prob_.G.nonZeros() + prob_.C.nonZeros() + dim);
    for (int k = 0; k < prob_.H.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob_.H, k); it; ++it)
        if (it.row() >= it.col()) trips.emplace_back(it.row(), it.col(), 0.0);
    for (int d = 0; d < dim; ++d) trips.emplace_back(d, d, 0.0);
    for (int k = 0; k < prob_.G.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob_.G, k); it; ++it)
        trips.emplace_back(n + it.row(), it.col(), 0.0);
    for (int k = 0; k < prob_.C.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob_.C, k); it; ++it)
        trips.emplace_back(n + me + it.row(), it.col(), 0.0);
    kkt_.resize(dim, dim);
    kkt_.setFromTriplets(trips.begin(), trips.end());
    kkt_.makeCompressed();

    auto slot = [&](int r, int cidx) {
      for (SpMat::InnerIterator it(kkt_, cidx); it; ++it)
        if (it.row() == r) return static_cast<int>(&it.valueRef() - kkt_.valuePtr());
      check(false, "qp: kkt slot lookup failed");
      return -1;
    };
    h_slots_.clear();
    g_slots_.clear();
    c_slots_.clear();
    diag_slots_.resize(dim);
    for (int k = 0; k < prob_.H.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob_.H, k); it; ++it)
        if (it.row() >= it.col()) h_slots_.push_back(slot(it.row(), it.col()));
    for (int k = 0; k < prob_.G.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob_.G, k); it; ++it)
        g_slots_.push_back(slot(n + it.row(), it.col()));
    for (int k = 0; k < prob_.C.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob_.C, k); it; ++it)
        c_slots_.push_back(slot(n + me + it.row(), it.col()));
    for (int d = 0; d < dim; ++d) diag_slots_[d] = slot(d, d);
    ldlt_.analyzePattern(kkt_);
  }

  void refresh_kkt(const Vec& barrier_diag) {
    const int n = prob_.n(), me = prob_.me(), mi = prob_.mi();
    std::fill(kkt_.valuePtr(), kkt_.valuePtr() + kkt_.nonZeros(), 0.0);
    int idx = 0;
    for (int k = 0; k < prob_.H.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob_.H, k); it; ++it)
        if (it.row() >= it.col()) kkt_.valuePtr()[h_slots_[idx++]] += it.value();
    idx = 0;
    for (int k = 0; k < prob_.G.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob_.G, k); it; ++it)
        kkt_.valuePtr()[g_slots_[idx++]] += it.value();
    idx = 0;
    for (int k = 0; k < prob_.C.outerSize(); ++k)
      for (SpMat::InnerIterator it(prob_.C, k); it; ++it)
        kkt_.valuePtr()[c_slots_[idx++]] += it.value();
    for (int d = 0; d < n; ++d) kkt_.valuePtr()[diag_slots_[d]] += st_.reg;
    for (int d = 0; d < me; ++d) kkt_.valuePtr()[diag_slots_[n + d]] -= st_.reg;
    for (int d = 0; d < mi; ++d)
      kkt_.valuePtr()[diag_slots_[n + me + d]] -= barrier_diag(d) + st_.reg;
  }

  bool factorize(const Vec& barrier_diag) {
    if (dense_) {
      const int n = prob_.n(), me = prob_.me(), mi = prob_.mi();
      const int dim = n + me + mi;
      dense_kkt_ = Mat::Zero(dim, dim);
      dense_kkt_.topLeftCorner(n, n) = Mat(prob_.H) + st_.reg * Mat::Identity(n, n);
      if (me) {
        dense_kkt_.block(n, 0, me, n) = Mat(prob_.G);
        dense_kkt_.block(0, n, n, me) = Mat(prob_.G).transpose();
        dense_kkt_.block(n, n, me, me).diagonal().setConstant(-st_.reg);
      }
      if (mi) {
        dense_kkt_.block(n + me, 0, mi, n) = Mat(prob_.C);
        dense_kkt_.block(0, n + me, n, mi) = Mat(prob_.C).transpose();
        dense_kkt_.block(n + me, n + me, mi, mi).diagonal() =
            -(barrier_diag.array() + st_.reg);
      }
      dense_ldlt_.compute(dense_kkt_);
      return dense_ldlt_.info() == Eigen::Success;
    }
    refresh_kkt(barrier_diag);
    ldlt_.factorize(kkt_);
    return ldlt_.info() == Eigen::Success;
  }

  Vec kkt_solve_raw(const Vec& rhs) const {
    return dense_ ? Vec(dense_ldlt_.solve(rhs)) : Vec(ldlt_.solve(rhs));
  }

  // Multiply by the unregularized KKT matrix (for iterative refinement).
  Vec kkt_mul(const Vec& v, const Vec& barrier_diag) const {
    const int n = prob_.n(), me = prob_.me(), mi = prob_.mi();
    Vec out(n + me + mi);
    auto z = v.head(n);
    out.head(n) = prob_.H * z;
    if (me) {
      out.head(n) += prob_.G.transpose() * v.segment(n, me);
      out.segment(n, me) = prob_.G * z;
    }
    if (mi) {
      out.head(n) += prob_.C.transpose() * v.tail(mi);
      out.tail(mi) = prob_.C * z - barrier_diag.cwiseProduct(v.tail(mi));
    }
    return out;
  }

  Vec kkt_solve(const Vec& rhs, const Vec& barrier_diag) const {
    Vec x = kkt_solve_raw(rhs);
    for (int r = 0; r < st_.refine_steps; ++r) {
      Vec res = rhs - kkt_mul(x, barrier_diag);
      x += kkt_solve_raw(res);
    }
    return x;
  }

  // ---- main loop ----

  QpSolution solve_impl(const QpSolution* warm) {
    const int n = prob_.n(), me = prob_.me(), mi = prob_.mi();
    QpSolution sol;
    sol.z = (warm && warm->z.size() == n) ? warm->z : Vec::Zero(n);
    sol.y = (warm && warm->y.size() == me) ? warm->y : Vec::Zero(me);
    sol.lam = Vec::Zero(mi);
    sol.s = Vec::Zero(mi);

    if (mi == 0) {
      solve_equality_only(sol);
      return sol;
    }

    Vec s_raw = prob_.c - prob_.C * sol.z;
    const bool warm_duals = warm && warm->lam.size() == mi;
    const double floor0 = warm_duals ? 1e-4 : 1.0;
    sol.s = s_raw.cwiseMax(floor0);
    sol.lam = warm_duals ? Vec(warm->lam.cwiseMax(floor0)) : Vec(Vec::Constant(mi, floor0));

    const double qn = prob_.q.lpNorm<Eigen::Infinity>();
    const double gn = me ? prob_.g.lpNorm<Eigen::Infinity>() : 0.0;
    const double cn = prob_.c.lpNorm<Eigen::Infinity>();

    Vec rd(n), rg(me), rc(mi), barrier(mi);
    for (sol.iters = 0; sol.iters < st_.max_iter; ++sol.iters) {
      rd = prob_.H * sol.z + prob_.q + prob_.C.transpose() * sol.lam;
      if (me) rd += prob_.G.transpose() * sol.y;
      if (me) rg = prob_.G * sol.z - prob_.g;
      rc = prob_.C * sol.z + sol.s - prob_.c;
      const double mu = sol.s.dot(sol.lam) / mi;

      sol.dual_res = rd.lpNorm<Eigen::Infinity>();
      sol.eq_res = me ? rg.lpNorm<Eigen::Infinity>() : 0.0;
      sol.ineq_res = (prob_.C * sol.z - prob_.c).cwiseMax(0.0).maxCoeff();
      sol.comp = mu;
      const bool done = sol.dual_res <= st_.tol * (1.0 + qn) &&
                        sol.eq_res <= st_.tol * (1.0 + gn) &&
                        sol.ineq_res <= st_.tol * (1.0 + cn) && mu <= st_.tol;
      if (done) {
        sol.status = QpStatus::Optimal;
        break;
      }

      barrier = (sol.s.array() / sol.lam.array())
                    .cwiseMax(1e-12)
                    .cwiseMin(1e12)
                    .matrix();
      if (!factorize(barrier)) {
        sol.status = QpStatus::Failed;
        return sol;
      }

      Vec rhs(n + me + mi);
      rhs.head(n) = -rd;
      if (me) rhs.segment(n, me) = -rg;
      rhs.tail(mi) = -rc + sol.s;
      Vec d_aff = kkt_solve(rhs, barrier);
      Vec dz = d_aff.head(n);
      Vec dlam = d_aff.tail(mi);
      Vec ds = -rc - prob_.C * dz;

      auto max_step = [](const Vec& v, const Vec& dv) {
        double a = 1.0;
        for (int i = 0; i < v.size(); ++i)
          if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
        return a;
      };
      const double ap_aff = max_step(sol.s, ds);
      const double ad_aff = max_step(sol.lam, dlam);
      const double mu_aff =
          (sol.s + ap_aff * ds).dot(sol.lam + ad_aff * dlam) / mi;
      const double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);

      // Corrector: same matrix, complementarity target sigma*mu - ds*dlam.
      Vec rs = Vec::Constant(mi, sigma * mu) - sol.s.cwiseProduct(sol.lam) -
               ds.cwiseProduct(dlam);
      rhs.tail(mi) = -rc - (rs.array() / sol.lam.array()).matrix();
      Vec d = kkt_solve(rhs, barrier);
      dz = d.head(n);
      Vec dy = me ? Vec(d.segment(n, me)) : Vec();
      dlam = d.tail(mi);
      ds = -rc - prob_.C * dz;

      const double eta = 0.995;
      const double ap = std::min(1.0, eta * max_step(sol.s, ds));
      const double ad = std::min(1.0, eta * max_step(sol.lam, dlam));
      sol.z += ap * dz;
      sol.s += ap * ds;
      sol.lam += ad * dlam;
      if (me) sol.y += ad * dy;
      if (std::min(ap, ad) < 1e-12) break;  // numerical stall
    }

    if (sol.status != QpStatus::Optimal) {
      sol.status = sol.eq_res > std::sqrt(st_.tol) * (1.0 + gn) ? QpStatus::Infeasible
                                                                : QpStatus::MaxIter;
    }
    if (st_.polish && sol.status == QpStatus::Optimal) polish(sol);
    factor_valid_ = false;  // barrier factor is iterate-specific
    return sol;
  }

  void solve_equality_only(QpSolution& sol) {
    const int n = prob_.n(), me = prob_.me();
    Vec barrier(0);
    if (!factor_valid_) {
      if (!factorize(barrier)) {
        sol.status = QpStatus::Failed;
        return;
      }
      factor_valid_ = true;
    }
    Vec rhs(n + me);
    rhs.head(n) = -prob_.q;
    if (me) rhs.segment(n, me) = prob_.g;
    Vec d = kkt_solve(rhs, barrier);
    sol.z = d.head(n);
    sol.y = me ? Vec(d.segment(n, me)) : Vec();
    sol.iters = 1;
    Vec rd = prob_.H * sol.z + prob_.q;
    if (me) rd += prob_.G.transpose() * sol.y;
    sol.dual_res = rd.lpNorm<Eigen::Infinity>();
    sol.eq_res = me ? (prob_.G * sol.z - prob_.g).lpNorm<Eigen::Infinity>() : 0.0;
    const double qn = prob_.q.lpNorm<Eigen::Infinity>();
    const double gn = me ? prob_.g.lpNorm<Eigen::Infinity>() : 0.0;
    if (sol.dual_res <= st_.tol * (1.0 + qn) && sol.eq_res <= st_.tol * (1.0 + gn))
      sol.status = QpStatus::Optimal;
    else
      sol.status = sol.eq_res > std::sqrt(st_.tol) * (1.0 + gn) ? QpStatus::Infeasible
                                                                 : QpStatus::Failed;
  }

  // Solve the equality-constrained QP on the detected active set and keep the
  // result when it improves the KKT residuals.
  void polish(QpSolution& sol) {
    const int n = prob_.n(), me = prob_.me(), mi = prob_.mi();
    std::vector<int> active;
    for (int i = 0; i < mi; ++i)
      if (sol.lam(i) > sol.s(i)) active.push_back(i);
    const int ma = static_cast<int>(active.size());

    SpMat Ca(ma, n);
    {
      std::vector<int> row_to_active(mi, -1);
      for (int a = 0; a < ma; ++a) row_to_active[active[a]] = a;
      std::vector<Triplet> trips;
      for (int k = 0; k < prob_.C.outerSize(); ++k)
        for (SpMat::InnerIterator it(prob_.C, k); it; ++it)
          if (row_to_active[it.row()] >= 0)
            trips.emplace_back(row_to_active[it.row()], it.col(), it.value());
      Ca.setFromTriplets(trips.begin(), trips.end());
    }

    const int dim = n + me + ma;
    Mat dk;
    Eigen::LDLT<Mat> dl;
    SpMat sk;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower> sl;
    const bool dense = dim <= st_.dense_threshold;
    const double dreg = 1e-11;
    if (dense) {
      dk = Mat::Zero(dim, dim);
      dk.topLeftCorner(n, n) = Mat(prob_.H) + dreg * Mat::Identity(n, n);
      if (me) {
        dk.block(n, 0, me, n) = Mat(prob_.G);
        dk.block(0, n, n, me) = Mat(prob_.G).transpose();
        dk.block(n, n, me, me).diagonal().setConstant(-dreg);
      }
      if (ma) {
        dk.block(n + me, 0, ma, n) = Mat(Ca);
        dk.block(0, n + me, n, ma) = Mat(Ca).transpose();
        dk.block(n + me, n + me, ma, ma).diagonal().setConstant(-dreg);
      }
      dl.compute(dk);
      if (dl.info() != Eigen::Success) return;
    } else {
      std::vector<Triplet> trips;
      for (int k = 0; k < prob_.H.outerSize(); ++k)
        for (SpMat::InnerIterator it(prob_.H, k); it; ++it)
          if (it.row() >= it.col()) trips.emplace_back(it.row(), it.col(), it.value());
      for (int d = 0; d < dim; ++d)
        trips.emplace_back(d, d, d < n ? dreg : -dreg);
      for (int k = 0; k < prob_.G.outerSize(); ++k)
        for (SpMat::InnerIterator it(prob_.G, k); it; ++it)
          trips.emplace_back(n + it.row(), it.col(), it.value());
      for (int k = 0; k < Ca.outerSize(); ++k)
        for (SpMat::InnerIterator it(Ca, k); it; ++it)
          trips.emplace_back(n + me + it.row(), it.col(), it.value());
      sk.resize(dim, dim);
      sk.setFromTriplets(trips.begin(), trips.end());
      sl.compute(sk);
      if (sl.info() != Eigen::Success) return;
    }

    auto raw_solve = [&](const Vec& rhs) {
      return dense ? Vec(dl.solve(rhs)) : Vec(sl.solve(rhs));
    };
    auto mul = [&](const Vec& v) {
      Vec out(dim);
      out.head(n) = prob_.H * v.head(n);
      if (me) {
        out.head(n) += prob_.G.transpose() * v.segment(n, me);
        out.segment(n, me) = prob_.G * v.head(n);
      }
      if (ma) {
        out.head(n) += Ca.transpose() * v.tail(ma);
        out.tail(ma) = Ca * v.head(n);
      }
      return out;
    };

    Vec rhs(dim);
    rhs.head(n) = -prob_.q;
    if (me) rhs.segment(n, me) = prob_.g;
    for (int a = 0; a < ma; ++a) rhs(n + me + a) = prob_.c(active[a]);
    Vec x = raw_solve(rhs);
    for (int r = 0; r < 3; ++r) x += raw_solve(rhs - mul(x));

    QpSolution pol = sol;
    pol.z = x.head(n);
    pol.y = me ? Vec(x.segment(n, me)) : Vec();
    pol.lam.setZero();
    for (int a = 0; a < ma; ++a) pol.lam(active[a]) = x(n + me + a);
    pol.s = prob_.c - prob_.C * pol.z;

    if (pol.lam.minCoeff() < -1e-9) return;
    if (pol.s.minCoeff() < -1e-9) return;
    Vec rd = prob_.H * pol.z + prob_.q + prob_.C.transpose() * pol.lam;
    if (me) rd += prob_.G.transpose() * pol.y;
    pol.dual_res = rd.lpNorm<Eigen::Infinity>();
    pol.eq_res = me ? (prob_.G * pol.z - prob_.g).lpNorm<Eigen::Infinity>() : 0.0;
    pol.ineq_res = (prob_.C * pol.z - prob_.c).cwiseMax(0.0).maxCoeff();
    pol.comp = std::abs(pol.s.dot(pol.lam)) / mi;
    pol.s = pol.s.cwiseMax(0.0);

    const double before = std::max({sol.dual_res, sol.eq_res, sol.ineq_res, sol.comp});
    const double after = std::max({pol.dual_res, pol.eq_res, pol.ineq_res, pol.comp});
    if (after <= before) sol = pol;
  }

  void dump(const std::string& prefix) const {
    detail::write_market(prob_.H, prefix + "_H.mtx");
    detail::write_market(prob_.G, prefix + "_G.mtx");
    detail::write_market(prob_.C, prefix + "_C.mtx");
    detail::write_vec(prob_.q, prefix + "_q.txt");
    detail::write_vec(prob_.g, prefix + "_g.txt");
    detail::write_vec(prob_.c, prefix + "_c.txt");
  }

  QpProblem prob_;
  QpSettings st_;
  bool dense_ = false;
  bool factor_valid_ = false;

  SpMat kkt_;
  std::vector<int> h_slots_, g_slots_, c_slots_, diag_slots_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
  Mat dense_kkt_;
  Eigen::LDLT<Mat> dense_ldlt_;
};

inline QpSolution qp_solve(const QpProblem& p, const QpSettings& s = {}) {
  QpSolver solver;
  solver.set_problem(p, s);
  return solver.solve();
}

// Stack per-agent QPs into one problem with copy-equals-owner equality rows.
struct StackedSolution {
  Vec z;                        // full stacked vector
  std::vector<Vec> per_agent;   // views split back per agent
  std::vector<int> offsets;
  Vec tie_dual;                 // multipliers of the consensus rows, tie-ordered
  QpSolution raw;
};

inline StackedSolution qp_solve_stacked(const std::vector<QpProblem>& agents,
                                        const CouplingMap& map,
                                        const QpSettings& settings = {}) {
  const int S = static_cast<int>(agents.size());
  require(static_cast<int>(map.layouts.size()) == S, "qp_solve_stacked: map/agent mismatch");
  std::vector<int> off(S + 1, 0);
  int me_total = 0, mi_total = 0, nnz_h = 0, nnz_g = 0, nnz_c = 0;
  for (int i = 0; i < S; ++i) {
    off[i + 1] = off[i] + agents[i].n();
    me_total += agents[i].me();
    mi_total += agents[i].mi();
    nnz_h += agents[i].H.nonZeros();
    nnz_g += agents[i].G.nonZeros();
    nnz_c += agents[i].C.nonZeros();
  }
  const int tie_rows = static_cast<int>(map.ties.size()) * map.traj_len;
  const int n = off[S];

  QpProblem big;
  big.q.resize(n);
  big.g.resize(me_total + tie_rows);
  big.c.resize(mi_total);
  std::vector<Triplet> th, tg, tc;
  th.reserve(nnz_h);
  tg.reserve(nnz_g + 2 * tie_rows);
  tc.reserve(nnz_c);
  int erow = 0, irow = 0;
  for (int i = 0; i < S; ++i) {
    const auto& p = agents[i];
    big.q.segment(off[i], p.n()) = p.q;
    for (int k = 0; k < p.H.outerSize(); ++k)
      for (SpMat::InnerIterator it(p.H, k); it; ++it)
        th.emplace_back(off[i] + it.row(), off[i] + it.col(), it.value());
    for (int k = 0; k < p.G.outerSize(); ++k)
      for (SpMat::InnerIterator it(p.G, k); it; ++it)
        tg.emplace_back(erow + it.row(), off[i] + it.col(), it.value());
    big.g.segment(erow, p.me()) = p.g;
    erow += p.me();
    for (int k = 0; k < p.C.outerSize(); ++k)
      for (SpMat::InnerIterator it(p.C, k); it; ++it)
        tc.emplace_back(irow + it.row(), off[i] + it.col(), it.value());
    big.c.segment(irow, p.mi()) = p.c;
    irow += p.mi();
  }
  for (std::size_t t = 0; t < map.ties.size(); ++t) {
    const auto& tie = map.ties[t];
    for (int r = 0; r < map.traj_len; ++r) {
      const int row = erow + static_cast<int>(t) * map.traj_len + r;
      tg.emplace_back(row, off[tie.holder] + tie.holder_off + r, 1.0);
      tg.emplace_back(row, off[tie.owner] + r, -1.0);  // owner states start at 0
      big.g(row) = 0.0;
    }
  }
  big.H.resize(n, n);
  big.H.setFromTriplets(th.begin(), th.end());
  big.G.resize(me_total + tie_rows, n);
  big.G.setFromTriplets(tg.begin(), tg.end());
  big.C.resize(mi_total, n);
  big.C.setFromTriplets(tc.begin(), tc.end());

  StackedSolution out;
  out.raw = qp_solve(big, settings);
  out.z = out.raw.z;
  out.offsets = off;
  for (int i = 0; i < S; ++i)
    out.per_agent.push_back(out.z.segment(off[i], agents[i].n()));
  if (out.raw.y.size() >= tie_rows && tie_rows > 0)
    out.tie_dual = out.raw.y.tail(tie_rows);
  return out;
}

}  // namespace dmpc
