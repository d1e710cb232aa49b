#pragma once

// Shared generators and reference solvers for the unit and acceptance suites.

#include <limits>
#include <random>
#include <vector>

#include "dmpc/layout.hpp"
#include "dmpc/qp.hpp"

namespace dmpc::synth {

inline SpMat to_sparse(const Mat& m) {
  SpMat s = m.sparseView(1.0, 1e-300);
  s.makeCompressed();
  return s;
}

inline QpProblem dense_problem(const Mat& H, const Vec& q, const Mat& G, const Vec& g,
                               const Mat& C, const Vec& c) {
  QpProblem p;
  p.H = to_sparse(H);
  p.q = q;
  p.g = g;
  p.c = c;
  p.G.resize(g.size(), q.size());
  if (G.size()) p.G = to_sparse(G);
  p.C.resize(c.size(), q.size());
  if (C.size()) p.C = to_sparse(C);
  return p;
}

// Exhaustive active-set reference solver for small dense QPs. Returns false
// when no enumerated subset yields a KKT-consistent feasible point.
inline bool enumerate_qp(const Mat& H, const Vec& q, const Mat& G, const Vec& g,
                         const Mat& C, const Vec& c, Vec& best) {
  const int n = static_cast<int>(q.size());
  const int me = static_cast<int>(g.size());
  const int mi = static_cast<int>(c.size());
  double best_obj = std::numeric_limits<double>::infinity();
  bool found = false;
  for (long mask = 0; mask < (1L << mi); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < mi; ++i)
      if (mask & (1L << i)) act.push_back(i);
    const int ma = static_cast<int>(act.size());
    Mat K = Mat::Zero(n + me + ma, n + me + ma);
    K.topLeftCorner(n, n) = H;
    Vec rhs(n + me + ma);
    rhs.head(n) = -q;
    if (me) {
      K.block(n, 0, me, n) = G;
      K.block(0, n, n, me) = G.transpose();
      rhs.segment(n, me) = g;
    }
    for (int a = 0; a < ma; ++a) {
      K.row(n + me + a).head(n) = C.row(act[a]);
      K.col(n + me + a).head(n) = C.row(act[a]).transpose();
      rhs(n + me + a) = c(act[a]);
    }
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) continue;
    Vec sol = lu.solve(rhs);
    Vec z = sol.head(n);
    bool ok = true;
    for (int a = 0; a < ma; ++a)
      if (sol(n + me + a) < -1e-9) ok = false;
    if (ok && mi > 0) ok = ((C * z - c).maxCoeff() <= 1e-9);
    if (me && ok) ok = ((G * z - g).cwiseAbs().maxCoeff() <= 1e-9);
    if (!ok) continue;
    const double obj = 0.5 * z.dot(H * z) + q.dot(z);
    if (obj < best_obj - 1e-12) {
      best_obj = obj;
      best = z;
      found = true;
    }
  }
  return found;
}

// Random strictly convex QP with a known feasible point; inequality margins
// mix tight and loose rows so solutions land on varied active sets.
struct RandomQp {
  Mat H;
  Vec q;
  Mat G;
  Vec g;
  Mat C;
  Vec c;
};

inline RandomQp make_random_qp(std::mt19937_64& rng, int n_lo, int n_hi, int mi_lo,
                               int mi_hi) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> margin(0.05, 1.0);
  RandomQp p;
  const int n = n_lo + static_cast<int>(rng() % (n_hi - n_lo + 1));
  const int me = static_cast<int>(rng() % 3);
  const int mi = mi_lo + static_cast<int>(rng() % (mi_hi - mi_lo + 1));
  Mat M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = nd(rng);
  p.H = M.transpose() * M + 0.5 * Mat::Identity(n, n);
  p.q.resize(n);
  Vec z0(n);
  for (int i = 0; i < n; ++i) p.q(i) = nd(rng);
  for (int i = 0; i < n; ++i) z0(i) = nd(rng);
  p.G.resize(me, n);
  p.C.resize(mi, n);
  for (int i = 0; i < me; ++i)
    for (int j = 0; j < n; ++j) p.G(i, j) = nd(rng);
  for (int i = 0; i < mi; ++i)
    for (int j = 0; j < n; ++j) p.C(i, j) = nd(rng);
  p.g = me ? Vec(p.G * z0) : Vec();
  p.c = p.C * z0;
  for (int i = 0; i < mi; ++i) p.c(i) += margin(rng);
  return p;
}

// Random convex consensus-coupled instance on a path graph, using the real
// per-agent decision layout so copy offsets and trajectory ties are exercised
// exactly as in the control pipeline. Hessians are banded so the sparse solver
// path stays fast over long synchronous runs.
struct ConsensusInstance {
  CouplingGraph graph;
  CouplingMap map;
  std::vector<QpProblem> probs;
};

inline ConsensusInstance make_consensus_instance(int S, int N, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> diag(0.8, 1.6);
  std::uniform_real_distribution<double> tight(0.0, 0.06);
  std::uniform_real_distribution<double> loose(0.1, 0.6);

  ConsensusInstance inst{CouplingGraph::path(S), build_coupling_map(CouplingGraph::path(S), N),
                         {}};
  const int band = 4;
  for (int i = 0; i < S; ++i) {
    const int n = inst.map.layouts[i].dim();
    Mat B = Mat::Zero(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = std::max(0, r - band); c <= r; ++c) B(r, c) = 0.45 * nd(rng);
    Mat H = B.transpose() * B;
    for (int d = 0; d < n; ++d) H(d, d) += diag(rng);

    QpProblem p;
    p.H = to_sparse(H);
    p.q.resize(n);
    Vec z0(n);
    for (int d = 0; d < n; ++d) p.q(d) = nd(rng);
    for (int d = 0; d < n; ++d) z0(d) = 0.5 * nd(rng);

    const int me = 4, mi = 10;
    Mat G = Mat::Zero(me, n), C = Mat::Zero(mi, n);
    for (int r = 0; r < me; ++r)
      for (int t = 0; t < 6; ++t) G(r, rng() % n) += nd(rng);
    for (int r = 0; r < mi; ++r)
      for (int t = 0; t < 6; ++t) C(r, rng() % n) += nd(rng);
    p.G = to_sparse(G);
    p.g = G * z0;
    p.C = to_sparse(C);
    p.c = C * z0;
    for (int r = 0; r < mi; ++r) p.c(r) += (r % 3 == 0) ? tight(rng) : loose(rng);
    inst.probs.push_back(std::move(p));
  }
  return inst;
}

}  // namespace dmpc::synth
