#include <catch2/catch_amalgamated.hpp>
#include <cstring>
#include <random>

#include "dmpc/qp.hpp"
#include "dmpc/synthetic.hpp"

using namespace dmpc;
using synth::dense_problem;
using synth::enumerate_qp;
using synth::to_sparse;
using Catch::Approx;

TEST_CASE("projection onto the box z >= 1") {
  Mat H = Mat::Identity(2, 2);
  Vec q = Vec::Zero(2);
  Mat C = -Mat::Identity(2, 2);
  Vec c = -Vec::Ones(2);
  auto sol = qp_solve(dense_problem(H, q, Mat(), Vec(), C, c));
  REQUIRE(sol.ok());
  CHECK(sol.z(0) == Approx(1.0).margin(1e-8));
  CHECK(sol.z(1) == Approx(1.0).margin(1e-8));
  CHECK(sol.lam(0) == Approx(1.0).margin(1e-7));
  CHECK(sol.lam(1) == Approx(1.0).margin(1e-7));
}

TEST_CASE("equality constrained minimum norm") {
  Mat H = Mat::Identity(2, 2);
  Vec q = Vec::Zero(2);
  Mat G(1, 2);
  G << 1, 1;
  Vec g(1);
  g << 2;
  auto sol = qp_solve(dense_problem(H, q, G, g, Mat(), Vec()));
  REQUIRE(sol.ok());
  CHECK(sol.z(0) == Approx(1.0).margin(1e-10));
  CHECK(sol.z(1) == Approx(1.0).margin(1e-10));
  CHECK(sol.y(0) == Approx(-1.0).margin(1e-10));
}

TEST_CASE("unconstrained solve") {
  Mat H(2, 2);
  H << 4, 1, 1, 3;
  Vec q(2);
  q << -1, 2;
  auto sol = qp_solve(dense_problem(H, q, Mat(), Vec(), Mat(), Vec()));
  REQUIRE(sol.ok());
  CHECK((H * sol.z + q).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("random problems match active-set enumeration") {
  std::mt19937_64 rng(42);
  int solved = 0;
  for (int inst = 0; inst < 50; ++inst) {
    auto p = synth::make_random_qp(rng, 6, 13, 3, 9);
    Vec ref;
    if (!enumerate_qp(p.H, p.q, p.G, p.g, p.C, p.c, ref)) continue;
    auto sol = qp_solve(dense_problem(p.H, p.q, p.G, p.g, p.C, p.c));
    REQUIRE(sol.ok());
    CHECK((sol.z - ref).lpNorm<Eigen::Infinity>() < 1e-6);
    ++solved;
  }
  CHECK(solved >= 45);
}

TEST_CASE("redundant duplicated rows are tolerated") {
  Mat H = Mat::Identity(3, 3);
  Vec q(3);
  q << -1, -2, -3;
  Mat C(4, 3);
  C << 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  Vec c(4);
  c << 0.5, 0.5, 0.5, 0.5;
  auto sol = qp_solve(dense_problem(H, q, Mat(), Vec(), C, c));
  REQUIRE(sol.ok());
  CHECK(sol.z(0) == Approx(0.5).margin(1e-7));
  CHECK(sol.z(1) == Approx(0.5).margin(1e-7));
  CHECK(sol.z(2) == Approx(0.5).margin(1e-7));
}

TEST_CASE("inconsistent equalities are reported infeasible") {
  Mat H = Mat::Identity(2, 2);
  Vec q = Vec::Zero(2);
  Mat G(2, 2);
  G << 1, 1, 1, 1;
  Vec g(2);
  g << 1, 2;  // contradictory duplicates
  auto sol = qp_solve(dense_problem(H, q, G, g, Mat(), Vec()));
  CHECK(sol.status == QpStatus::Infeasible);
}

TEST_CASE("warm start reaches the same solution") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  const int n = 12, mi = 8;
  Mat M(n, n), C(mi, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = nd(rng);
  for (int i = 0; i < mi; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = nd(rng);
  Mat H = M.transpose() * M + Mat::Identity(n, n);
  Vec q(n), z0(n);
  for (int i = 0; i < n; ++i) q(i) = nd(rng);
  for (int i = 0; i < n; ++i) z0(i) = nd(rng);
  Vec c = C * z0 + Vec::Constant(mi, 0.3);

  QpSolver solver;
  solver.set_problem(dense_problem(H, q, Mat(), Vec(), C, c));
  auto cold = solver.solve();
  REQUIRE(cold.ok());
  Vec q2 = q + Vec::Constant(n, 0.01);
  solver.update_vectors(&q2, nullptr, nullptr);
  auto warm = solver.solve(cold);
  auto fresh = qp_solve(dense_problem(H, q2, Mat(), Vec(), C, c));
  REQUIRE(warm.ok());
  CHECK((warm.z - fresh.z).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK(warm.iters <= cold.iters + 2);
}

TEST_CASE("objective scaling leaves the solution unchanged") {
  Mat H(3, 3);
  H << 3, 1, 0, 1, 2, 0, 0, 0, 1;
  Vec q(3);
  q << 1, -2, 0.5;
  Mat C = Mat::Identity(3, 3);
  Vec c = Vec::Constant(3, 0.2);
  auto a = qp_solve(dense_problem(H, q, Mat(), Vec(), C, c));
  auto b = qp_solve(dense_problem(10.0 * H, 10.0 * q, Mat(), Vec(), C, c));
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK((a.z - b.z).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("solves are deterministic") {
  Mat H = Mat::Identity(4, 4);
  Vec q(4);
  q << 1, -1, 2, -2;
  Mat C(2, 4);
  C << 1, 1, 0, 0, 0, 0, 1, 1;
  Vec c(2);
  c << 0.1, -0.1;
  auto a = qp_solve(dense_problem(H, q, Mat(), Vec(), C, c));
  auto b = qp_solve(dense_problem(H, q, Mat(), Vec(), C, c));
  REQUIRE(a.ok());
  CHECK(memcmp(a.z.data(), b.z.data(), sizeof(double) * 4) == 0);
  CHECK(memcmp(a.lam.data(), b.lam.data(), sizeof(double) * 2) == 0);
}

TEST_CASE("sparse and dense paths agree on a larger problem") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  const int n = 300;
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) t.emplace_back(i, i, 2.0 + (i % 5));
  for (int i = 0; i + 1 < n; ++i) {
    t.emplace_back(i, i + 1, 0.3);
    t.emplace_back(i + 1, i, 0.3);
  }
  QpProblem p;
  p.H.resize(n, n);
  p.H.setFromTriplets(t.begin(), t.end());
  p.q.resize(n);
  for (int i = 0; i < n; ++i) p.q(i) = nd(rng);
  p.G.resize(0, n);
  p.g.resize(0);
  std::vector<Triplet> tc;
  for (int i = 0; i < n; ++i) tc.emplace_back(i, i, 1.0);
  p.C.resize(n, n);
  p.C.setFromTriplets(tc.begin(), tc.end());
  p.c = Vec::Constant(n, 0.15);

  QpSettings sp;  // sparse (above threshold)
  auto a = qp_solve(p, sp);
  QpSettings sd;
  sd.dense_threshold = 10000;  // force dense
  auto b = qp_solve(p, sd);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK((a.z - b.z).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("stacked solve ties copies to owners") {
  // Two agents, each owning a 3-vector "trajectory" plus a copy of the other.
  Mat H1 = Mat::Identity(6, 6);
  Mat H2 = 2.0 * Mat::Identity(6, 6);
  Vec q1(6), q2(6);
  q1 << -1, 0, 0, 0, 0, 0;
  q2 << 0, -2, 0, 0, 0, 0;
  QpProblem p1 = dense_problem(H1, q1, Mat(), Vec(), Mat(), Vec());
  QpProblem p2 = dense_problem(H2, q2, Mat(), Vec(), Mat(), Vec());
  p1.G.resize(0, 6);
  p1.C.resize(0, 6);
  p2.G.resize(0, 6);
  p2.C.resize(0, 6);

  CouplingMap map;
  map.traj_len = 3;
  map.layouts.resize(2);
  map.ties.push_back({1, 0, 3});  // agent 0 holds a copy of agent 1
  map.ties.push_back({0, 1, 3});

  auto sol = qp_solve_stacked({p1, p2}, map, {});
  REQUIRE(sol.raw.ok());
  CHECK((sol.per_agent[0].segment(3, 3) - sol.per_agent[1].head(3))
            .lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((sol.per_agent[1].segment(3, 3) - sol.per_agent[0].head(3))
            .lpNorm<Eigen::Infinity>() < 1e-8);

  // Direct dense KKT on the assembled system for comparison.
  Mat Hb = Mat::Zero(12, 12);
  Hb.topLeftCorner(6, 6) = H1;
  Hb.bottomRightCorner(6, 6) = H2;
  Vec qb(12);
  qb << q1, q2;
  Mat Gb = Mat::Zero(6, 12);
  for (int r = 0; r < 3; ++r) {
    Gb(r, 3 + r) = 1.0;
    Gb(r, 6 + r) = -1.0;
    Gb(3 + r, 9 + r) = 1.0;
    Gb(3 + r, r) = -1.0;
  }
  Mat K = Mat::Zero(18, 18);
  K.topLeftCorner(12, 12) = Hb;
  K.block(12, 0, 6, 12) = Gb;
  K.block(0, 12, 12, 6) = Gb.transpose();
  Vec rhs = Vec::Zero(18);
  rhs.head(12) = -qb;
  Vec ref = K.fullPivLu().solve(rhs);
  CHECK((sol.z - ref.head(12)).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("non-finite data is rejected") {
  Mat H = Mat::Identity(2, 2);
  Vec q(2);
  q << std::numeric_limits<double>::quiet_NaN(), 0.0;
  QpSolver s;
  CHECK_THROWS_AS(s.set_problem(dense_problem(H, q, Mat(), Vec(), Mat(), Vec())),
                  ConfigError);
}
